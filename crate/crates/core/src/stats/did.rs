//! Two-way fixed-effects difference-in-differences with bank-clustered
//! standard errors.
//!
//! Bank effects are absorbed by demeaning within bank; year effects enter as
//! explicit dummies for every year but the first. Standard errors are
//! cluster-robust by bank with the small-sample factor
//! `G/(G−1)·(N−1)/(N−K)`, where `K` counts the non-absorbed columns.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Result, StatsError};
use crate::ingest::{BankPanel, TreatmentAssignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Factor {
    Treated,
    /// `1{t = year}`.
    Year(i32),
    /// `1{t ≥ year}`.
    From(i32),
    /// Bank-level covariate looked up in [`DidSpec::covariates`].
    Covariate(String),
}

impl Factor {
    fn name(&self) -> String {
        match self {
            Factor::Treated => "treated".into(),
            Factor::Year(y) => format!("year{y}"),
            Factor::From(y) => format!("post{y}"),
            Factor::Covariate(c) => c.clone(),
        }
    }
}

/// Product of factors, e.g. `treated:year2021`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term(pub Vec<Factor>);

impl Term {
    pub fn name(&self) -> String {
        self.0.iter().map(Factor::name).collect::<Vec<_>>().join(":")
    }

    /// `Treated × 1{t = year}`.
    pub fn treated_in(year: i32) -> Self {
        Term(vec![Factor::Treated, Factor::Year(year)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    #[default]
    LogAssets,
    Assets,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DidSpec {
    pub terms: Vec<Term>,
    pub outcome: Outcome,
    /// Covariate name → bank id → value.
    #[serde(default)]
    pub covariates: BTreeMap<String, BTreeMap<String, f64>>,
}

impl DidSpec {
    /// `Treated × 1{t = y}` for every panel year after `base_year`.
    pub fn event_study(panel: &BankPanel, base_year: i32) -> Self {
        Self {
            terms: panel.years().iter().filter(|&&y| y > base_year).map(|&y| Term::treated_in(y)).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidResult {
    /// Term names in specification order.
    pub terms: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    pub clustered_se: BTreeMap<String, f64>,
    /// Two-sided p-values from t(G−1); absent when the SE is zero.
    pub p_values: BTreeMap<String, Option<f64>>,
    pub year_effects: BTreeMap<i32, f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub n_banks: usize,
    pub n_treated: usize,
    /// Terms whose clustered SE is numerically zero.
    pub degenerate_se: Vec<String>,
}

/// One row of a panel regression.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObs {
    pub unit: usize,
    pub time: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Coefficients, clustered SEs and fit of a within-unit regression.
#[derive(Debug, Clone, PartialEq)]
pub struct TwfeFit {
    /// Year effects for times `1..T`, then the regressors.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub r_squared: f64,
    pub n_clusters: usize,
}

/// OLS of `y` on time dummies and `x` with unit effects absorbed.
pub fn twfe_ols(obs: &[PanelObs]) -> Result<TwfeFit> {
    let n = obs.len();
    let n_units = obs.iter().map(|o| o.unit + 1).max().unwrap_or(0);
    let n_times = obs.iter().map(|o| o.time + 1).max().unwrap_or(0);
    let n_x = obs.first().map_or(0, |o| o.x.len());
    let k = n_times.saturating_sub(1) + n_x;
    let mut present = vec![0usize; n_units];
    obs.iter().for_each(|o| present[o.unit] += 1);
    let g = present.iter().filter(|c| **c > 0).count();
    if g < 2 {
        return Err(StatsError::TooFewClusters(g));
    }
    if n_times < 2 {
        return Err(StatsError::InsufficientData("need at least two periods".into()));
    }
    if n <= k {
        return Err(StatsError::CollinearDesign);
    }

    let mut x = DMatrix::from_fn(n, k, |r, c| {
        let o = &obs[r];
        if c < n_times - 1 {
            f64::from(u8::from(o.time == c + 1))
        } else {
            o.x[c - (n_times - 1)]
        }
    });
    let mut y = DVector::from_iterator(n, obs.iter().map(|o| o.y));
    let y_raw = y.clone();

    // demean within unit
    let mut sums = DMatrix::<f64>::zeros(n_units, k + 1);
    for (r, o) in obs.iter().enumerate() {
        for c in 0..k {
            sums[(o.unit, c)] += x[(r, c)];
        }
        sums[(o.unit, k)] += y[r];
    }
    for (r, o) in obs.iter().enumerate() {
        let cnt = present[o.unit] as f64;
        for c in 0..k {
            x[(r, c)] -= sums[(o.unit, c)] / cnt;
        }
        y[r] -= sums[(o.unit, k)] / cnt;
    }

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-10 * smax {
        return Err(StatsError::CollinearDesign);
    }
    let xtx = x.tr_mul(&x);
    let chol = xtx.clone().cholesky().ok_or(StatsError::CollinearDesign)?;
    // normal equations plus one step of iterative refinement
    let mut beta = chol.solve(&x.tr_mul(&y));
    beta += chol.solve(&x.tr_mul(&(&y - &x * &beta)));
    let resid = &y - &x * &beta;

    let bread = chol.inverse();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for unit in 0..n_units {
        let mut score = DVector::<f64>::zeros(k);
        for (r, o) in obs.iter().enumerate() {
            if o.unit == unit {
                score += x.row(r).transpose() * resid[r];
            }
        }
        meat += &score * score.transpose();
    }
    let (gf, nf, kf) = (g as f64, n as f64, k as f64);
    let c = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    let v = &bread * meat * &bread * c;
    let se = (0..k).map(|i| v[(i, i)].max(0.0).sqrt()).collect();

    let ybar = y_raw.mean();
    let sst: f64 = y_raw.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr = resid.norm_squared();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    Ok(TwfeFit {
        beta: beta.iter().copied().collect(),
        se,
        r_squared,
        n_clusters: g,
    })
}

/// Difference-in-differences of the panel outcome on the specified terms,
/// with bank and year fixed effects. Banks missing from the treatment
/// assignment are left out.
pub fn did_regress(panel: &BankPanel, treatment: &TreatmentAssignment, spec: &DidSpec) -> Result<DidResult> {
    if spec.terms.is_empty() {
        return Err(StatsError::InvalidParameter("no regression terms".into()));
    }
    let years = panel.years().to_vec();
    let mut units: Vec<String> = Vec::new();
    let mut obs = Vec::new();
    for rec in panel.records() {
        let Some(treated) = treatment.is_treated(&rec.bank_id) else { continue };
        let unit = match units.iter().position(|u| *u == rec.bank_id) {
            Some(u) => u,
            None => {
                units.push(rec.bank_id.clone());
                units.len() - 1
            }
        };
        let y = match spec.outcome {
            Outcome::LogAssets if rec.total_assets > 0.0 => rec.total_assets.ln(),
            Outcome::LogAssets => {
                return Err(StatsError::InvalidParameter(format!(
                    "log outcome needs positive assets ({} in {})",
                    rec.bank_id, rec.year
                )))
            }
            Outcome::Assets => rec.total_assets,
        };
        let mut x = Vec::with_capacity(spec.terms.len());
        for term in &spec.terms {
            let mut v = 1.0;
            for f in &term.0 {
                v *= match f {
                    Factor::Treated => f64::from(u8::from(treated)),
                    Factor::Year(t) => f64::from(u8::from(rec.year == *t)),
                    Factor::From(t) => f64::from(u8::from(rec.year >= *t)),
                    Factor::Covariate(name) => *spec
                        .covariates
                        .get(name)
                        .and_then(|m| m.get(&rec.bank_id))
                        .ok_or_else(|| StatsError::InsufficientData(format!("covariate {name} missing for {}", rec.bank_id)))?,
                };
            }
            x.push(v);
        }
        let time = years.binary_search(&rec.year).expect("panel years cover every record");
        obs.push(PanelObs { unit, time, y, x });
    }
    let n_treated = units.iter().filter(|u| treatment.is_treated(u) == Some(true)).count();
    if n_treated == 0 || n_treated == units.len() {
        return Err(StatsError::InsufficientData("need at least one treated and one control bank".into()));
    }
    let fit = twfe_ols(&obs)?;
    let offset = years.len() - 1;
    let names: Vec<String> = spec.terms.iter().map(Term::name).collect();
    let t_dist = StudentsT::new(0.0, 1.0, (fit.n_clusters - 1) as f64).map_err(|e| StatsError::InvalidParameter(e.to_string()))?;
    let scale = fit.beta[offset..].iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let mut result = DidResult {
        terms: names.clone(),
        coefficients: BTreeMap::new(),
        clustered_se: BTreeMap::new(),
        p_values: BTreeMap::new(),
        year_effects: years[1..].iter().zip(&fit.beta).map(|(y, b)| (*y, *b)).collect(),
        r_squared: fit.r_squared,
        n_obs: obs.len(),
        n_banks: units.len(),
        n_treated,
        degenerate_se: Vec::new(),
    };
    for (i, name) in names.into_iter().enumerate() {
        let (b, se) = (fit.beta[offset + i], fit.se[offset + i]);
        let p = if se > 1e-12 * scale {
            Some(2.0 * t_dist.sf((b / se).abs()))
        } else {
            result.degenerate_se.push(name.clone());
            None
        };
        result.coefficients.insert(name.clone(), b);
        result.clustered_se.insert(name.clone(), se);
        result.p_values.insert(name, p);
    }
    Ok(result)
}
