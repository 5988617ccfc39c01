use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lambda2_of, Result, StatsError};
use crate::reconstruct::ReconstructionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub bank_id: String,
    pub lambda2: f64,
    /// Change relative to the full-sample λ₂, in percent.
    pub pct_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub baseline: f64,
    pub drops: Vec<Drop>,
    /// Largest absolute percentage change over all drops.
    pub max_abs_deviation_pct: f64,
    pub max_bank: String,
}

/// Recompute λ₂ with each bank removed in turn.
pub fn leave_one_out(bank_ids: &[String], assets: &[f64], cfg: &ReconstructionConfig) -> Result<LooReport> {
    if bank_ids.len() != assets.len() {
        return Err(StatsError::LengthMismatch(bank_ids.len(), assets.len()));
    }
    if assets.len() < 4 {
        return Err(StatsError::TooFewPoints {
            need: 4,
            got: assets.len(),
        });
    }
    let baseline = lambda2_of(assets, cfg)?;
    let drops = (0..assets.len())
        .into_par_iter()
        .map(|k| {
            let rest: Vec<f64> = assets.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, a)| *a).collect();
            let lambda2 = lambda2_of(&rest, cfg)?;
            Ok(Drop {
                bank_id: bank_ids[k].clone(),
                lambda2,
                pct_change: 100.0 * (lambda2 / baseline - 1.0),
            })
        })
        .collect::<Result<Vec<Drop>>>()?;
    let worst = drops
        .iter()
        .max_by(|a, b| a.pct_change.abs().total_cmp(&b.pct_change.abs()))
        .expect("at least four drops");
    Ok(LooReport {
        baseline,
        max_abs_deviation_pct: worst.pct_change.abs(),
        max_bank: worst.bank_id.clone(),
        drops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::RatioRule;

    #[test]
    fn reports_the_largest_drop() {
        let assets = [400.0, 350.0, 300.0, 200.0, 150.0, 90.0];
        let ids: Vec<String> = (0..6).map(|i| format!("B{i}")).collect();
        let cfg = ReconstructionConfig::max_entropy(RatioRule::Fixed(0.05)).with_threshold(0.0);
        let r = leave_one_out(&ids, &assets, &cfg).unwrap();
        assert_eq!(r.drops.len(), 6);
        let max = r.drops.iter().map(|d| d.pct_change.abs()).fold(0.0, f64::max);
        assert_eq!(r.max_abs_deviation_pct, max);
        for (d, k) in r.drops.iter().zip(0..) {
            let rest: Vec<f64> = assets.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, a)| *a).collect();
            assert_eq!(d.lambda2, lambda2_of(&rest, &cfg).unwrap());
        }
    }
}
