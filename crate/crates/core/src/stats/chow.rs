use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{Result, StatsError};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChowMode {
    /// Intercept and trend in each regime.
    Linear,
    /// Intercept only, used when a regime has fewer than three points.
    MeanShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChowResult {
    pub break_year: i32,
    pub f_stat: f64,
    pub p_value: f64,
    /// Means of the regimes `t ≤ break_year` and `t > break_year`.
    pub regime_means: (f64, f64),
    pub mode: ChowMode,
    pub df: (usize, usize),
    /// Set when the mean-shift fallback was needed.
    pub low_power: bool,
    pub n_obs: usize,
}

fn ssr_mean(y: &[f64]) -> f64 {
    let m = util::mean(y);
    y.iter().map(|v| (v - m).powi(2)).sum()
}

fn ssr_line(x: &[f64], y: &[f64]) -> f64 {
    let (b, a) = util::linear_fit(x, y);
    x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum()
}

/// Structural-break F test at `break_year`; the first regime includes the
/// break year itself.
pub fn chow_test(series: &BTreeMap<i32, f64>, break_year: i32) -> Result<ChowResult> {
    let n = series.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { need: 3, got: n });
    }
    let centre = series.keys().map(|&y| f64::from(y)).sum::<f64>() / n as f64;
    let (early, late): (Vec<_>, Vec<_>) = series
        .iter()
        .map(|(&t, &y)| (f64::from(t) - centre, y, t <= break_year))
        .partition(|p| p.2);
    if early.is_empty() || late.is_empty() {
        return Err(StatsError::InsufficientData(format!(
            "break year {break_year} leaves an empty regime"
        )));
    }
    let split = |v: &[(f64, f64, bool)]| -> (Vec<f64>, Vec<f64>) { v.iter().map(|p| (p.0, p.1)).unzip() };
    let (x1, y1) = split(&early);
    let (x2, y2) = split(&late);
    let x: Vec<f64> = x1.iter().chain(&x2).copied().collect();
    let y: Vec<f64> = y1.iter().chain(&y2).copied().collect();

    let mode = if x1.len() >= 3 && x2.len() >= 3 {
        ChowMode::Linear
    } else {
        ChowMode::MeanShift
    };
    let (k, s_pooled, s_split) = match mode {
        ChowMode::Linear => (2, ssr_line(&x, &y), ssr_line(&x1, &y1) + ssr_line(&x2, &y2)),
        ChowMode::MeanShift => (1, ssr_mean(&y), ssr_mean(&y1) + ssr_mean(&y2)),
    };
    let df2 = n - 2 * k;
    // Rounding noise on a perfect fit should not register as a break.
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let floor = 1e-20 * scale;
    let gain = (s_pooled - s_split).max(0.0);
    let (f_stat, p_value) = if gain <= floor {
        (0.0, 1.0)
    } else if s_split <= floor {
        (f64::INFINITY, 0.0)
    } else {
        let f = (gain / k as f64) / (s_split / df2 as f64);
        let dist = FisherSnedecor::new(k as f64, df2 as f64).map_err(|e| StatsError::InvalidParameter(e.to_string()))?;
        (f, dist.sf(f))
    };
    Ok(ChowResult {
        break_year,
        f_stat,
        p_value,
        regime_means: (util::mean(&y1), util::mean(&y2)),
        mode,
        df: (k, df2),
        low_power: mode == ChowMode::MeanShift,
        n_obs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(i32, f64)]) -> BTreeMap<i32, f64> {
        points.iter().copied().collect()
    }

    #[test]
    fn linear_series_has_no_break() {
        let s = series(&[(2015, 1.0), (2016, 3.0), (2017, 5.0), (2018, 7.0), (2019, 9.0), (2020, 11.0)]);
        let r = chow_test(&s, 2017).unwrap();
        assert_eq!(r.mode, ChowMode::Linear);
        assert!(r.f_stat < 1e-9);
    }

    #[test]
    fn three_point_regime_means() {
        let s = series(&[(2018, 2284.0), (2021, 2170.0), (2023, 1259.0)]);
        let r = chow_test(&s, 2021).unwrap();
        assert_eq!(r.regime_means, (2227.0, 1259.0));
        assert_eq!(r.mode, ChowMode::MeanShift);
        assert!(r.low_power);
        // pooled and split residual sums by hand
        let m = (2284.0 + 2170.0 + 1259.0) / 3.0;
        let sp = (2284.0f64 - m).powi(2) + (2170.0f64 - m).powi(2) + (1259.0f64 - m).powi(2);
        let su = 2.0 * 57.0f64.powi(2);
        assert!((r.f_stat - (sp - su) / su).abs() < 1e-9 * r.f_stat);
    }

    /// Step series against an explicit OLS oracle via normal equations.
    #[test]
    fn step_series_breaks() {
        let noise = [0.3, -0.2, 0.1, -0.4, 0.25, 0.05];
        let pts: Vec<(i32, f64)> = (0..6).map(|t| (2010 + t, if t < 3 { 1.0 } else { 100.0 } + noise[t as usize])).collect();
        let r = chow_test(&series(&pts), 2012).unwrap();
        let ols = |xs: &[f64], ys: &[f64]| {
            let n = xs.len() as f64;
            let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
            let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let a = (sy - b * sx) / n;
            xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>()
        };
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let sp = ols(&xs, &ys);
        let su = ols(&xs[..3], &ys[..3]) + ols(&xs[3..], &ys[3..]);
        let f = ((sp - su) / 2.0) / (su / 2.0);
        assert!((r.f_stat - f).abs() < 1e-6 * f);
        assert!(r.f_stat > 1e3 && r.p_value < 0.01);
    }

    #[test]
    fn rejects_thin_inputs() {
        assert!(chow_test(&series(&[(1, 1.0), (2, 2.0)]), 1).is_err());
        assert!(chow_test(&series(&[(1, 1.0), (2, 2.0), (3, 2.0)]), 3).is_err());
    }
}
