//! Power-law, lognormal and exponential fits to a positive sample, compared
//! by Vuong's likelihood-ratio test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::{Result, StatsError};

/// Minimum number of points at or above `x_min`.
pub const MIN_TAIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum XminRule {
    /// Smallest sample value.
    Minimum,
    Fixed(f64),
    /// Candidate minimising the power-law KS distance.
    KsScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestFit {
    PowerLaw,
    Lognormal,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitComparison {
    pub n: usize,
    pub n_tail: usize,
    pub x_min: f64,
    pub alpha_hat: f64,
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,
    pub exp_rate: f64,
    /// Summed log-likelihood ratio, power law minus lognormal. Negative
    /// values favour the lognormal.
    pub lr_pl_vs_ln: f64,
    pub vuong_z: f64,
    pub p_value: f64,
    pub lr_pl_vs_exp: f64,
    pub p_value_exp: f64,
    pub ks_power_law: f64,
    pub ks_lognormal: f64,
    pub ks_exponential: f64,
    /// Verdict of the power-law/lognormal comparison at the 10% level.
    pub best_fit: BestFit,
}

/// Continuous power-law exponent `1 + m / Σ ln(xᵢ/x_min)` over the points at
/// or above `x_min`.
pub fn power_law_mle(sample: &[f64], x_min: f64) -> Result<f64> {
    if !(x_min > 0.0) || sample.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(StatsError::NonPositiveSample);
    }
    let logs: Vec<f64> = sample.iter().filter(|x| **x >= x_min).map(|x| (x / x_min).ln()).collect();
    if logs.is_empty() {
        return Err(StatsError::TooFewPoints { need: 1, got: 0 });
    }
    let s: f64 = logs.iter().sum();
    if s <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    Ok(1.0 + logs.len() as f64 / s)
}

/// Largest gap between the empirical CDF of sorted `xs` and `cdf`.
fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// Vuong statistic for per-point log-likelihood differences: `(R, z, p)`.
fn vuong(diffs: &[f64]) -> (f64, f64, f64) {
    let n = diffs.len() as f64;
    let r: f64 = diffs.iter().sum();
    let mean = r / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return (r, 0.0, 1.0);
    }
    let z = r / (n.sqrt() * sd);
    (r, z, erfc(z.abs() / std::f64::consts::SQRT_2))
}

pub fn fit_distributions(sample: &[f64], x_min: Option<f64>) -> Result<FitComparison> {
    fit_distributions_with(sample, x_min.map_or(XminRule::Minimum, XminRule::Fixed))
}

pub fn fit_distributions_with(sample: &[f64], rule: XminRule) -> Result<FitComparison> {
    if sample.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(StatsError::NonPositiveSample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < MIN_TAIL {
        return Err(StatsError::TooFewPoints {
            need: MIN_TAIL,
            got: sorted.len(),
        });
    }
    let x_min = match rule {
        XminRule::Minimum => sorted[0],
        XminRule::Fixed(x) if x > 0.0 => x,
        XminRule::Fixed(_) => return Err(StatsError::NonPositiveSample),
        XminRule::KsScan => ks_scan(&sorted)?,
    };
    let tail: Vec<f64> = sorted.iter().copied().filter(|x| *x >= x_min).collect();
    let m = tail.len();
    if m < MIN_TAIL {
        return Err(StatsError::TooFewPoints { need: MIN_TAIL, got: m });
    }
    let alpha = power_law_mle(&tail, x_min)?;

    let logs: Vec<f64> = tail.iter().map(|x| x.ln()).collect();
    let mu = logs.iter().sum::<f64>() / m as f64;
    let sigma = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / m as f64).sqrt();
    let excess = tail.iter().map(|x| x - x_min).sum::<f64>() / m as f64;
    if !(sigma > 0.0 && excess > 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let rate = 1.0 / excess;

    let ln_pl = |x: f64| (alpha - 1.0).ln() - x_min.ln() - alpha * (x / x_min).ln();
    let ln_ln = |x: f64| {
        let z = (x.ln() - mu) / sigma;
        -x.ln() - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
    };
    let ln_exp = |x: f64| rate.ln() - rate * (x - x_min);

    let d_ln: Vec<f64> = tail.iter().map(|&x| ln_pl(x) - ln_ln(x)).collect();
    let d_exp: Vec<f64> = tail.iter().map(|&x| ln_pl(x) - ln_exp(x)).collect();
    let (lr, z, p) = vuong(&d_ln);
    let (lr_exp, _, p_exp) = vuong(&d_exp);

    let normal = Normal::new(mu, sigma).map_err(|e| StatsError::InvalidParameter(e.to_string()))?;
    let ks_power_law = ks_distance(&tail, |x| 1.0 - (x / x_min).powf(1.0 - alpha));
    let ks_lognormal = ks_distance(&tail, |x| normal.cdf(x.ln()));
    let ks_exponential = ks_distance(&tail, |x| 1.0 - (-rate * (x - x_min)).exp());

    let best_fit = match (p < 0.1, lr < 0.0) {
        (false, _) => BestFit::Inconclusive,
        (true, true) => BestFit::Lognormal,
        (true, false) => BestFit::PowerLaw,
    };
    Ok(FitComparison {
        n: sample.len(),
        n_tail: m,
        x_min,
        alpha_hat: alpha,
        lognormal_mu: mu,
        lognormal_sigma: sigma,
        exp_rate: rate,
        lr_pl_vs_ln: lr,
        vuong_z: z,
        p_value: p,
        lr_pl_vs_exp: lr_exp,
        p_value_exp: p_exp,
        ks_power_law,
        ks_lognormal,
        ks_exponential,
        best_fit,
    })
}

fn ks_scan(sorted: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    let mut prev = f64::NAN;
    for (i, &x) in sorted.iter().enumerate() {
        if x == prev {
            continue;
        }
        prev = x;
        let tail = &sorted[i..];
        if tail.len() < MIN_TAIL {
            break;
        }
        let Ok(alpha) = power_law_mle(tail, x) else { continue };
        let d = ks_distance(tail, |v| 1.0 - (v / x).powf(1.0 - alpha));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, x));
        }
    }
    best.map(|(_, x)| x).ok_or(StatsError::DegenerateSample)
}
