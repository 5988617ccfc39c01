use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lambda2_of, Result, StatsError};
use crate::reconstruct::ReconstructionConfig;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    /// Successful replicates in replicate-index order.
    pub replicates: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub seed: u64,
    pub b_requested: usize,
    pub b_effective: usize,
    /// Indices of replicates dropped as degenerate.
    pub skipped: Vec<usize>,
}

/// Percentile interval from nearest-rank order statistics at
/// `(1 − level)/2` and `(1 + level)/2`.
pub fn percentile_ci(replicates: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (util::nearest_rank(&sorted, tail), util::nearest_rank(&sorted, 1.0 - tail))
}

/// Resample banks with replacement and recompute λ₂ for each replicate.
///
/// Replicate `b` draws from its own stream of `seed`, so the output does not
/// depend on the number of worker threads.
pub fn bootstrap_lambda2(
    assets: &[f64],
    cfg: &ReconstructionConfig,
    boot: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let n = assets.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { need: 3, got: n });
    }
    if boot.replicates < 10 {
        return Err(StatsError::InvalidParameter(format!(
            "need at least 10 replicates, got {}",
            boot.replicates
        )));
    }
    if !(boot.level > 0.0 && boot.level < 1.0) {
        return Err(StatsError::InvalidParameter(format!("level must lie in (0, 1), got {}", boot.level)));
    }
    let point = lambda2_of(assets, cfg)?;
    let draws: Vec<Option<f64>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = util::stream_rng(boot.seed, b as u64);
            let sample: Vec<f64> = (0..n).map(|_| assets[rng.random_range(0..n)]).collect();
            match lambda2_of(&sample, cfg) {
                Ok(l) => Some(l),
                Err(e) => {
                    log::warn!("bootstrap replicate {b} skipped: {e}");
                    None
                }
            }
        })
        .collect();
    let skipped: Vec<usize> = draws.iter().enumerate().filter(|(_, d)| d.is_none()).map(|(b, _)| b).collect();
    let replicates: Vec<f64> = draws.into_iter().flatten().collect();
    if replicates.is_empty() {
        return Err(StatsError::AllReplicatesDegenerate);
    }
    let (ci_low, ci_high) = percentile_ci(&replicates, boot.level);
    Ok(BootstrapResult {
        point,
        b_effective: replicates.len(),
        replicates,
        ci_low,
        ci_high,
        level: boot.level,
        seed: boot.seed,
        b_requested: boot.replicates,
        skipped,
    })
}
