//! Synthetic bank panels with lognormal sizes.

use contagion_core::ingest::{BankPanel, BankRecord, IngestError};
use contagion_core::util;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_banks: usize,
    pub years: Vec<i32>,
    pub seed: u64,
    /// Mean and standard deviation of log base-year assets.
    pub log_mean: f64,
    pub log_sd: f64,
    /// Common log-drift per year, aligned with `years`; missing entries are 0.
    pub drift: Vec<f64>,
    /// Standard deviation of the bank-year log noise.
    pub noise_sd: f64,
    /// Proportional asset reduction applied to treated banks from
    /// `shrink_from` on.
    pub shrinkage: f64,
    pub shrink_from: i32,
    /// Banks whose first-year assets exceed this quantile are treated.
    pub treat_quantile: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_banks: 70,
            years: vec![2018, 2021, 2023],
            seed: 0,
            log_mean: 10.0,
            log_sd: 1.0,
            drift: Vec::new(),
            noise_sd: 0.02,
            shrinkage: 0.0,
            shrink_from: 2021,
            treat_quantile: 0.75,
        }
    }
}

/// Draw a panel. Base sizes come first in bank order, then the noise in
/// (bank, year) order, so a given seed always yields the same panel.
pub fn synth_panel(cfg: &SynthConfig) -> Result<BankPanel, IngestError> {
    if cfg.n_banks < 3 {
        return Err(IngestError::InvalidRecord(format!("need at least 3 banks, got {}", cfg.n_banks)));
    }
    if cfg.years.is_empty() {
        return Err(IngestError::EmptyPanel);
    }
    if !(0.0..1.0).contains(&cfg.shrinkage) {
        return Err(IngestError::InvalidRecord(format!("shrinkage must lie in [0, 1), got {}", cfg.shrinkage)));
    }
    let normal = |sd: f64| {
        Normal::new(0.0, sd).map_err(|e| IngestError::InvalidRecord(format!("standard deviation {sd}: {e}")))
    };
    let (size_dist, noise_dist) = (normal(cfg.log_sd)?, normal(cfg.noise_sd)?);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let base: Vec<f64> = (0..cfg.n_banks).map(|_| cfg.log_mean + size_dist.sample(&mut rng)).collect();

    let mut years = cfg.years.clone();
    years.sort_unstable();
    years.dedup();
    let mut log_assets = Vec::with_capacity(cfg.n_banks);
    for b in base {
        let row: Vec<f64> = years
            .iter()
            .enumerate()
            .map(|(k, _)| b + cfg.drift.get(k).copied().unwrap_or(0.0) + noise_dist.sample(&mut rng))
            .collect();
        log_assets.push(row);
    }
    let first: Vec<f64> = log_assets.iter().map(|r| r[0].exp()).collect();
    let cut = util::quantile(&first, cfg.treat_quantile);
    let shrink = (1.0 - cfg.shrinkage).ln();

    let width = cfg.n_banks.to_string().len().max(3);
    let mut records = Vec::with_capacity(cfg.n_banks * years.len());
    for (i, row) in log_assets.iter().enumerate() {
        let treated = row[0].exp() > cut;
        for (&year, &v) in years.iter().zip(row) {
            let v = if treated && year >= cfg.shrink_from { v + shrink } else { v };
            records.push(BankRecord::new(format!("B{:0width$}", i + 1), year, v.exp()));
        }
    }
    BankPanel::new(records)
}
