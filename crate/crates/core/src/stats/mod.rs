//! Statistical inference around reconstructed networks.

pub mod bootstrap;
pub mod chow;
pub mod correlation;
pub mod did;
pub mod fit;
pub mod loo;
pub mod permutation;
pub mod placebo;

use thiserror::Error;

use crate::graph::{self, GraphError};
use crate::ingest::IngestError;
use crate::reconstruct::{self, ReconstructError, ReconstructionConfig};

pub use bootstrap::{bootstrap_lambda2, percentile_ci, BootstrapConfig, BootstrapResult};
pub use chow::{chow_test, ChowMode, ChowResult};
pub use correlation::{series_correlation, CorrelationMode};
pub use did::{did_regress, DidResult, DidSpec, Factor, Outcome, Term};
pub use fit::{fit_distributions, power_law_mle, BestFit, FitComparison, XminRule};
pub use loo::{leave_one_out, LooReport};
pub use permutation::{permutation_test, year_label_permutation, PermutationResult};
pub use placebo::{placebo_null, PlaceboResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {need} observations, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("every bootstrap replicate was degenerate")]
    AllReplicatesDegenerate,
    #[error("sample must be positive and finite")]
    NonPositiveSample,
    #[error("sample has no spread above x_min")]
    DegenerateSample,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("design matrix is rank deficient after fixed effects are absorbed")]
    CollinearDesign,
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// λ₂ of the thresholded network reconstructed from `assets`.
pub fn lambda2_of(assets: &[f64], cfg: &ReconstructionConfig) -> Result<f64> {
    let ids: Vec<String> = (0..assets.len()).map(|i| i.to_string()).collect();
    let x = reconstruct::reconstruct(&ids, assets, cfg)?;
    let net = graph::build_network(&x, cfg.min_edge_threshold);
    Ok(graph::laplacian_spectrum(&net)?.lambda2)
}
