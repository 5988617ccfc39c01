//! Interbank contagion toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`ingest`] | bank-year panels, balanced samples, treatment assignment |
//! | [`reconstruct`] | bilateral exposure matrices from per-bank aggregates |
//! | [`graph`] | weighted networks, Laplacian spectra, topology metrics |
//! | [`contagion`] | distress diffusion, decay parameters, threshold cascades |
//! | [`stats`] | bootstrap, permutation, placebo, distribution fits, Chow, DID |
//!
//! A typical run loads a panel, reconstructs one exposure matrix per year,
//! turns it into a [`graph::WeightedNetwork`] and reads the algebraic
//! connectivity λ₂ off the Laplacian spectrum:
//!
//! ```
//! use contagion_core::reconstruct::{self, RatioRule, ReconstructionConfig};
//! use contagion_core::graph;
//!
//! let assets = [120_000.0, 80_000.0, 45_000.0, 30_000.0];
//! let ids: Vec<String> = (0..4).map(|i| format!("B{i}")).collect();
//! let cfg = ReconstructionConfig::max_entropy(RatioRule::Fixed(0.05));
//! let x = reconstruct::reconstruct(&ids, &assets, &cfg).unwrap();
//! let net = graph::build_network(&x, cfg.min_edge_threshold);
//! let spec = graph::laplacian_spectrum(&net).unwrap();
//! assert!(spec.lambda2 > 0.0);
//! ```

pub mod contagion;
pub mod graph;
pub mod ingest;
pub mod reconstruct;
pub mod stats;
pub mod util;
