use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::graph::{self, WeightedNetwork};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub observed: f64,
    /// λ₂ of each shuffled network, in draw order.
    pub null: Vec<f64>,
    /// Mid-rank percentile of the observed λ₂ in the null, in [0, 100];
    /// `None` when every draw ties with the observed value.
    pub percentile: Option<f64>,
    /// Number of draws equal to the observed λ₂ (relative tolerance 1e-12).
    pub ties: usize,
    pub seed: u64,
}

/// Null distribution of λ₂ with the edge set held fixed and edge weights
/// randomly permuted across edges.
pub fn placebo_null(net: &WeightedNetwork, n_draws: usize, seed: u64) -> Result<PlaceboResult> {
    let n = net.len();
    let w = net.weights();
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| w[(i, j)] > 0.0).collect();
    if edges.len() < 2 {
        return Err(StatsError::TooFewPoints {
            need: 2,
            got: edges.len(),
        });
    }
    if n_draws == 0 {
        return Err(StatsError::InvalidParameter("n_draws must be positive".into()));
    }
    let weights: Vec<f64> = edges.iter().map(|&(i, j)| w[(i, j)]).collect();
    let observed = graph::laplacian_spectrum(net)?.lambda2;
    let null = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = util::stream_rng(seed, k as u64);
            let mut shuffled = weights.clone();
            shuffled.shuffle(&mut rng);
            let triples: Vec<(usize, usize, f64)> =
                edges.iter().zip(&shuffled).map(|(&(i, j), &x)| (i, j, x)).collect();
            let g = WeightedNetwork::from_edges(n, &triples)?;
            Ok(graph::laplacian_spectrum(&g)?.lambda2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let tol = 1e-12 * observed.abs().max(1e-300);
    let ties = null.iter().filter(|v| (*v - observed).abs() <= tol).count();
    let below = null.iter().filter(|v| **v < observed - tol).count();
    let percentile = (ties < null.len()).then(|| 100.0 * (below as f64 + 0.5 * ties as f64) / null.len() as f64);
    Ok(PlaceboResult {
        observed,
        null,
        percentile,
        ties,
        seed,
    })
}
