use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lambda2_of, Result, StatsError};
use crate::ingest::BankPanel;
use crate::reconstruct::ReconstructionConfig;
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Observed statistic `mean(a) − mean(b)`.
    pub observed: f64,
    pub p_value: f64,
    /// Relabelings at least as extreme as the observed one, identity excluded.
    pub extreme: usize,
    /// Relabelings evaluated, identity excluded.
    pub n_perm: usize,
    /// True when every relabeling was enumerated.
    pub exact: bool,
    pub seed: u64,
}

fn as_extreme(t: f64, observed: f64) -> bool {
    t.abs() >= observed.abs() * (1.0 - 1e-12) - 1e-300
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut c: usize = 1;
    for i in 0..k {
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

/// Two-sided test of equal means by relabelling group membership.
///
/// When the number of distinct relabelings does not exceed `n_perm` they are
/// all enumerated; otherwise `n_perm` random relabelings are drawn. Either
/// way `p = (r + 1)/(N + 1)` where `r` of the `N` non-identity relabelings
/// are at least as extreme as the observed split.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<PermutationResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InsufficientData("both groups must be non-empty".into()));
    }
    if n_perm == 0 {
        return Err(StatsError::InvalidParameter("n_perm must be positive".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let na = a.len();
    let n = pooled.len();
    let total: f64 = pooled.iter().sum();
    let stat = |sum_a: f64| sum_a / na as f64 - (total - sum_a) / (n - na) as f64;
    let observed = util::mean(a) - util::mean(b);

    let (extreme, evaluated, exact) = match binomial(n, na) {
        Some(all) if all <= n_perm => {
            let mut idx: Vec<usize> = (0..na).collect();
            let mut extreme = 0;
            loop {
                let is_identity = idx.iter().enumerate().all(|(k, &i)| k == i);
                if !is_identity && as_extreme(stat(idx.iter().map(|&i| pooled[i]).sum()), observed) {
                    extreme += 1;
                }
                let mut p = na;
                while p > 0 && idx[p - 1] == n - na + p - 1 {
                    p -= 1;
                }
                if p == 0 {
                    break;
                }
                idx[p - 1] += 1;
                for q in p..na {
                    idx[q] = idx[q - 1] + 1;
                }
            }
            (extreme, all - 1, true)
        }
        _ => {
            let extreme = (0..n_perm)
                .into_par_iter()
                .filter(|&k| {
                    let mut rng = util::stream_rng(seed, k as u64);
                    let mut v = pooled.clone();
                    v.shuffle(&mut rng);
                    as_extreme(stat(v[..na].iter().sum()), observed)
                })
                .count();
            (extreme, n_perm, false)
        }
    };
    Ok(PermutationResult {
        observed,
        p_value: (extreme + 1) as f64 / (evaluated + 1) as f64,
        extreme,
        n_perm: evaluated,
        exact,
        seed,
    })
}

/// Test `λ₂(year_a) − λ₂(year_b) = 0` by swapping each bank's two year
/// labels with probability ½ and recomputing both years' λ₂.
///
/// Only banks observed in both years take part.
pub fn year_label_permutation(
    panel: &BankPanel,
    year_a: i32,
    year_b: i32,
    cfg: &ReconstructionConfig,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if n_perm == 0 {
        return Err(StatsError::InvalidParameter("n_perm must be positive".into()));
    }
    let (ids_a, assets_a) = panel.year_assets(year_a)?;
    let (ids_b, assets_b) = panel.year_assets(year_b)?;
    let pairs: Vec<(f64, f64)> = ids_a
        .iter()
        .zip(&assets_a)
        .filter_map(|(id, &x)| ids_b.iter().position(|j| j == id).map(|k| (x, assets_b[k])))
        .collect();
    if pairs.len() < 3 {
        return Err(StatsError::TooFewPoints {
            need: 3,
            got: pairs.len(),
        });
    }
    let stat = |swap: &[bool]| -> Result<f64> {
        let (xa, xb): (Vec<f64>, Vec<f64>) =
            pairs.iter().zip(swap).map(|(&(x, y), &s)| if s { (y, x) } else { (x, y) }).unzip();
        Ok(lambda2_of(&xa, cfg)? - lambda2_of(&xb, cfg)?)
    };
    let observed = stat(&vec![false; pairs.len()])?;
    let draws: Vec<Option<bool>> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = util::stream_rng(seed, k as u64);
            let swap: Vec<bool> = (0..pairs.len()).map(|_| rng.random_bool(0.5)).collect();
            match stat(&swap) {
                Ok(t) => Some(as_extreme(t, observed)),
                Err(e) => {
                    log::warn!("relabeling {k} skipped: {e}");
                    None
                }
            }
        })
        .collect();
    let evaluated = draws.iter().flatten().count();
    let extreme = draws.iter().flatten().filter(|e| **e).count();
    Ok(PermutationResult {
        observed,
        p_value: (extreme + 1) as f64 / (evaluated + 1) as f64,
        extreme,
        n_perm: evaluated,
        exact: false,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BankRecord;
    use crate::reconstruct::RatioRule;

    #[test]
    fn identical_groups_give_one() {
        let r = permutation_test(&[4.0, 4.0, 4.0], &[4.0, 4.0, 4.0], 1000, 1).unwrap();
        assert!(r.exact);
        assert_eq!(r.p_value, 1.0);
        let r = permutation_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 5, 1).unwrap();
        assert!(!r.exact);
        assert_eq!(r.p_value, 1.0);
    }

    /// Independent enumeration over all 3-subsets of 6 positions.
    #[test]
    fn separated_groups_match_enumeration() {
        let a = [0.0, 0.0, 0.0];
        let b = [10.0, 10.0, 10.0];
        let pooled = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let mut labelings = Vec::new();
        for mask in 0u32..64 {
            if mask.count_ones() == 3 {
                labelings.push(mask);
            }
        }
        assert_eq!(labelings.len(), 20);
        let obs: f64 = -10.0;
        let extreme = labelings
            .iter()
            .filter(|&&m| m != 0b000111)
            .filter(|&&m| {
                let sa: f64 = (0..6).filter(|i| m >> i & 1 == 1).map(|i| pooled[i]).sum();
                (sa / 3.0 - (30.0 - sa) / 3.0).abs() >= obs.abs()
            })
            .count();
        assert_eq!(extreme, 1);
        let r = permutation_test(&a, &b, 20, 0).unwrap();
        assert!(r.exact);
        assert_eq!(r.extreme, extreme);
        assert_eq!(r.n_perm, 19);
        assert_eq!(r.p_value, 0.1);
    }

    #[test]
    fn seeded_monte_carlo_repeats() {
        let a = [1.0, 2.5, 3.0, 4.2, 5.0, 1.1, 0.3, 2.2];
        let b = [2.0, 3.5, 3.3, 6.2, 5.5, 4.1, 1.3, 2.9];
        let x = permutation_test(&a, &b, 999, 5).unwrap();
        let y = permutation_test(&a, &b, 999, 5).unwrap();
        assert_eq!(x, y);
        assert!(!x.exact);
        assert!(x.p_value > 0.0 && x.p_value <= 1.0);
    }

    #[test]
    fn year_labels_identical_years() {
        let mut recs = Vec::new();
        for (i, a) in [900.0, 400.0, 350.0, 120.0, 80.0].iter().enumerate() {
            recs.push(BankRecord::new(format!("B{i}"), 2018, *a));
            recs.push(BankRecord::new(format!("B{i}"), 2023, *a));
        }
        let panel = BankPanel::new(recs).unwrap();
        let cfg = ReconstructionConfig::max_entropy(RatioRule::Fixed(0.05)).with_threshold(0.0);
        let r = year_label_permutation(&panel, 2018, 2023, &cfg, 50, 2).unwrap();
        assert_eq!(r.observed, 0.0);
        assert_eq!(r.p_value, 1.0);
    }
}
