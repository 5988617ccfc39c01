//! Bilateral exposure reconstruction from per-bank aggregates.
//!
//! Every method produces an [`ExposureMatrix`] with a zero diagonal. Entry
//! `(i, j)` is bank `i`'s exposure to bank `j`, so row sums are interbank
//! assets and column sums are interbank liabilities.
//!
//! * [`max_entropy`]: the product form `A_i L_j / ΣA`, diagonal zeroed, then
//!   marginals restored by iterative proportional fitting.
//! * [`kde_weights`]: Gaussian kernel density product weights scaled to a
//!   total; per-bank marginals are not matched.
//! * [`fitness_model`]: `η_i η_j` weights with `η_i = A_i^α`, scaled to a
//!   total; per-bank marginals are not matched.
//! * [`min_density`]: a sparse greedy transport plan with at most `2n - 1`
//!   positive entries.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util;

/// Relative convergence target for iterative proportional fitting.
pub const IPF_TOLERANCE: f64 = 1e-12;
/// Sweep cap for iterative proportional fitting.
pub const IPF_MAX_SWEEPS: usize = 10_000;
/// Marginal tolerance (relative to `max(A)`) an accepted fit must meet.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_RATIO: f64 = 0.05;
/// Edge threshold in millions.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("assets must be strictly positive and finite (bank index {0})")]
    NonPositiveAssets(usize),
    #[error("interbank ratio {ratio} for bank index {index} is outside (0, 1)")]
    InvalidRatio { index: usize, ratio: f64 },
    #[error("aggregate interbank total is zero")]
    ZeroTotal,
    #[error("row and column totals differ: {assets} vs {liabilities}")]
    MarginMismatch { assets: f64, liabilities: f64 },
    #[error("bank index {0} holds more than the rest of the system can absorb (A_i + L_i > total)")]
    Infeasible(usize),
    #[error("proportional fitting did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("kernel bandwidth is not positive and finite ({0})")]
    DegenerateBandwidth(f64),
    #[error("total interbank exposure must be positive, got {0}")]
    NonPositiveTotal(f64),
    #[error("need at least {need} banks, got {got}")]
    TooFewBanks { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid matrix file: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

type Result<T> = std::result::Result<T, ReconstructError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MaxEntropy,
    Kde,
    Fitness,
    MinDensity,
}

/// How a bank's interbank ratio ρᵢ is derived from its total assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RatioRule {
    /// Same ρ for every bank.
    Fixed(f64),
    /// `large` for banks strictly above the `size_quantile` of assets,
    /// `small` otherwise.
    SizeThreshold { large: f64, small: f64, size_quantile: f64 },
    /// `ρᵢ = intercept + slope · ln(Tᵢ / mean(T))`.
    LinearLog { intercept: f64, slope: f64 },
    /// Asset-quantile tiers. `cutoffs` are ascending quantiles in (0, 1);
    /// `ratios[k]` applies to banks strictly above `k` of the cutoff levels,
    /// so `ratios.len() == cutoffs.len() + 1`.
    Tiered { cutoffs: Vec<f64>, ratios: Vec<f64> },
}

impl RatioRule {
    /// 3% above the 75th percentile, 7% at or below.
    pub fn size_dependent() -> Self {
        RatioRule::SizeThreshold {
            large: 0.03,
            small: 0.07,
            size_quantile: 0.75,
        }
    }

    pub fn ratios(&self, assets: &[f64]) -> Result<Vec<f64>> {
        let rhos: Vec<f64> = match self {
            RatioRule::Fixed(rho) => vec![*rho; assets.len()],
            RatioRule::SizeThreshold {
                large,
                small,
                size_quantile,
            } => {
                let cut = util::quantile(assets, *size_quantile);
                assets.iter().map(|&a| if a > cut { *large } else { *small }).collect()
            }
            RatioRule::LinearLog { intercept, slope } => {
                let avg = util::mean(assets);
                assets.iter().map(|&a| intercept + slope * (a / avg).ln()).collect()
            }
            RatioRule::Tiered { cutoffs, ratios } => {
                if ratios.len() != cutoffs.len() + 1 {
                    return Err(ReconstructError::InvalidConfig(
                        "tiered rule needs one more ratio than cutoffs".into(),
                    ));
                }
                if cutoffs.windows(2).any(|w| w[0] >= w[1])
                    || cutoffs.iter().any(|q| !(*q > 0.0 && *q < 1.0))
                {
                    return Err(ReconstructError::InvalidConfig(
                        "tier cutoffs must be strictly increasing quantiles in (0, 1)".into(),
                    ));
                }
                let mut sorted = assets.to_vec();
                sorted.sort_by(f64::total_cmp);
                let levels: Vec<f64> = cutoffs.iter().map(|q| util::quantile_sorted(&sorted, *q)).collect();
                assets
                    .iter()
                    .map(|&a| ratios[levels.iter().filter(|&&l| a > l).count()])
                    .collect()
            }
        };
        for (index, &ratio) in rhos.iter().enumerate() {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(ReconstructError::InvalidRatio { index, ratio });
            }
        }
        Ok(rhos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub method: Method,
    pub ratio_rule: RatioRule,
    /// Fitness exponent α; only read by [`Method::Fitness`].
    pub fitness_alpha: f64,
    /// Pairs whose combined exposure is at or below this are dropped when the
    /// network is built.
    pub min_edge_threshold: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self::max_entropy(RatioRule::Fixed(DEFAULT_RATIO))
    }
}

impl ReconstructionConfig {
    pub fn max_entropy(ratio_rule: RatioRule) -> Self {
        Self {
            method: Method::MaxEntropy,
            ratio_rule,
            fitness_alpha: 1.0,
            min_edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_threshold(mut self, epsilon: f64) -> Self {
        self.min_edge_threshold = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Fitness && !(self.fitness_alpha > 0.0 && self.fitness_alpha.is_finite()) {
            return Err(ReconstructError::InvalidConfig(format!(
                "fitness_alpha must be positive, got {}",
                self.fitness_alpha
            )));
        }
        if !(self.min_edge_threshold >= 0.0 && self.min_edge_threshold.is_finite()) {
            return Err(ReconstructError::InvalidConfig(format!(
                "min_edge_threshold must be >= 0, got {}",
                self.min_edge_threshold
            )));
        }
        Ok(())
    }
}

/// Dense non-negative exposure matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureMatrix {
    pub bank_ids: Vec<String>,
    #[serde(with = "matrix_rows")]
    pub values: DMatrix<f64>,
    pub row_targets: Vec<f64>,
    pub col_targets: Vec<f64>,
    pub method: Method,
    /// True when row and column sums match the targets.
    pub marginals_fitted: bool,
    /// True once [`apply_threshold`] has been applied.
    pub thresholded: bool,
    pub ipf_sweeps: Option<usize>,
    pub warnings: Vec<String>,
}

impl ExposureMatrix {
    fn new(values: DMatrix<f64>, row_targets: Vec<f64>, col_targets: Vec<f64>, method: Method) -> Self {
        let n = values.nrows();
        Self {
            bank_ids: (0..n).map(|i| i.to_string()).collect(),
            values,
            row_targets,
            col_targets,
            method,
            marginals_fitted: true,
            thresholded: false,
            ipf_sweeps: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Self {
        assert_eq!(ids.len(), self.len(), "id count must match matrix size");
        self.bank_ids = ids;
        self
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Largest absolute deviation of row or column sums from their targets.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self.row_sums().into_iter().zip(&self.row_targets).map(|(s, t)| (s - t).abs());
        let cols = self.col_sums().into_iter().zip(&self.col_targets).map(|(s, t)| (s - t).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn edge_count(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    /// Dense CSV: the header holds the bank ids, row `i` holds bank `i`'s
    /// exposures in header order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.bank_ids)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Read a dense CSV written by [`ExposureMatrix::write_csv`]. Targets are
    /// set to the realised sums.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let ids: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let n = ids.len();
        let mut data = Vec::with_capacity(n * n);
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != n {
                return Err(ReconstructError::InvalidMatrix(format!("row has {} fields, expected {n}", rec.len())));
            }
            for f in rec.iter() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| ReconstructError::InvalidMatrix(format!("unparseable entry `{f}`")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ReconstructError::InvalidMatrix(format!("entry {v} is negative or non-finite")));
                }
                data.push(v);
            }
        }
        if data.len() != n * n {
            return Err(ReconstructError::InvalidMatrix(format!("expected {n} rows")));
        }
        let values = DMatrix::from_row_slice(n, n, &data);
        if (0..n).any(|i| values[(i, i)] != 0.0) {
            return Err(ReconstructError::InvalidMatrix("diagonal must be zero".into()));
        }
        let mut m = ExposureMatrix::new(values, Vec::new(), Vec::new(), Method::MaxEntropy).with_ids(ids);
        m.row_targets = m.row_sums();
        m.col_targets = m.col_sums();
        Ok(m)
    }
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("exposure matrix must be square"));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

fn check_positive(assets: &[f64]) -> Result<()> {
    match assets.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
        Some(i) => Err(ReconstructError::NonPositiveAssets(i)),
        None => Ok(()),
    }
}

fn check_margins(a: &[f64], l: &[f64]) -> Result<f64> {
    if a.len() != l.len() {
        return Err(ReconstructError::LengthMismatch(a.len(), l.len()));
    }
    if a.iter().chain(l).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ReconstructError::InvalidConfig("aggregates must be finite and non-negative".into()));
    }
    let total: f64 = a.iter().sum();
    let total_l: f64 = l.iter().sum();
    if total <= 0.0 {
        return Err(ReconstructError::ZeroTotal);
    }
    if (total - total_l).abs() > MARGINAL_TOLERANCE * total {
        return Err(ReconstructError::MarginMismatch {
            assets: total,
            liabilities: total_l,
        });
    }
    // A zero-diagonal matrix with these margins exists iff no bank needs more
    // counterparty capacity than the others jointly provide.
    if let Some(i) = (0..a.len()).find(|&i| a[i] + l[i] > total * (1.0 + 1e-12)) {
        return Err(ReconstructError::Infeasible(i));
    }
    Ok(total)
}

/// Interbank assets `Aᵢ = ρᵢ·Tᵢ` with balanced positions `L = A`.
pub fn interbank_aggregates(assets: &[f64], rule: &RatioRule) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(assets)?;
    let rhos = rule.ratios(assets)?;
    let a: Vec<f64> = assets.iter().zip(&rhos).map(|(t, r)| t * r).collect();
    Ok((a.clone(), a))
}

/// Maximum-entropy estimate with the diagonal removed and marginals restored
/// by iterative proportional fitting.
pub fn max_entropy(a: &[f64], l: &[f64]) -> Result<ExposureMatrix> {
    let total = check_margins(a, l)?;
    let n = a.len();
    let mut x = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { a[i] * l[j] / total });
    // A bank with A_i + L_i = total must trade with everyone else, which
    // forces every entry not involving it to zero. Fitting would only reach
    // those zeros sublinearly, so impose them up front.
    for p in (0..n).filter(|&p| a[p] + l[p] >= total * (1.0 - 1e-12)) {
        for i in (0..n).filter(|&i| i != p) {
            for j in (0..n).filter(|&j| j != p) {
                x[(i, j)] = 0.0;
            }
        }
    }
    let scale = a.iter().chain(l).copied().fold(0.0, f64::max);
    let (sweeps, residual) = ipf(&mut x, a, l, scale);
    if residual > MARGINAL_TOLERANCE * scale {
        return Err(ReconstructError::NotConverged { sweeps, residual });
    }
    let mut m = ExposureMatrix::new(x, a.to_vec(), l.to_vec(), Method::MaxEntropy);
    m.ipf_sweeps = Some(sweeps);
    if residual > IPF_TOLERANCE * scale {
        m.warnings.push(format!(
            "proportional fitting stopped at residual {residual:e} after {sweeps} sweeps"
        ));
    }
    Ok(m)
}

/// Alternating row/column rescaling. Returns sweeps used and the final
/// largest marginal deviation.
fn ipf(x: &mut DMatrix<f64>, rows: &[f64], cols: &[f64], scale: f64) -> (usize, f64) {
    let n = rows.len();
    let mut residual = f64::INFINITY;
    for sweep in 1..=IPF_MAX_SWEEPS {
        for i in 0..n {
            let s: f64 = x.row(i).sum();
            let f = if s > 0.0 { rows[i] / s } else { 0.0 };
            x.row_mut(i).scale_mut(f);
        }
        for j in 0..n {
            let s: f64 = x.column(j).sum();
            let f = if s > 0.0 { cols[j] / s } else { 0.0 };
            x.column_mut(j).scale_mut(f);
        }
        // Columns are exact after the column pass; rows carry the error.
        residual = (0..n).map(|i| (x.row(i).sum() - rows[i]).abs()).fold(0.0, f64::max);
        if residual <= IPF_TOLERANCE * scale {
            return (sweep, residual);
        }
    }
    (IPF_MAX_SWEEPS, residual)
}

/// Silverman bandwidth `0.9·min(σ, IQR/1.34)·n^(-1/5)`, falling back to
/// `0.9·σ·n^(-1/5)` when the IQR vanishes. `None` when σ is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let sd = util::sample_sd(values);
    let iqr = util::quantile(values, 0.75) - util::quantile(values, 0.25);
    let spread = sd.min(iqr / 1.34);
    let spread = if spread > 0.0 { spread } else { sd };
    (spread > 0.0).then(|| 0.9 * spread * n.powf(-0.2))
}

/// Gaussian kernel density estimate at every sample point.
pub fn kde_at_points(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    values
        .iter()
        .map(|&x| norm * values.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>())
        .collect()
}

/// Kernel-density product weights `f̂(Aᵢ)·f̂(Aⱼ)` normalised so that the
/// off-diagonal entries sum to `total_interbank`.
pub fn kde_weights(assets: &[f64], total_interbank: f64) -> Result<ExposureMatrix> {
    let n = assets.len();
    if n < 2 {
        return Err(ReconstructError::TooFewBanks { need: 2, got: n });
    }
    check_positive(assets)?;
    if !(total_interbank > 0.0 && total_interbank.is_finite()) {
        return Err(ReconstructError::NonPositiveTotal(total_interbank));
    }
    let mut warnings = Vec::new();
    let density = match silverman_bandwidth(assets) {
        Some(h) if h.is_finite() => kde_at_points(assets, h),
        Some(h) => return Err(ReconstructError::DegenerateBandwidth(h)),
        None => {
            warnings.push("identical assets: kernel bandwidth is zero, using uniform weights".to_owned());
            vec![1.0; n]
        }
    };
    let mut m = product_weights(&density, total_interbank, Method::Kde)?;
    m.warnings = warnings;
    Ok(m)
}

/// Fitness-model weights `ηᵢηⱼ` with `ηᵢ = Aᵢ^α`, normalised to
/// `total_interbank` over the off-diagonal entries.
pub fn fitness_model(assets: &[f64], alpha: f64, total_interbank: f64) -> Result<ExposureMatrix> {
    check_positive(assets)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ReconstructError::InvalidConfig(format!("fitness exponent must be >= 0, got {alpha}")));
    }
    if !(total_interbank > 0.0 && total_interbank.is_finite()) {
        return Err(ReconstructError::NonPositiveTotal(total_interbank));
    }
    // Scale by the largest asset first so large exponents do not overflow.
    let top = assets.iter().copied().fold(0.0, f64::max);
    let eta: Vec<f64> = assets.iter().map(|a| (a / top).powf(alpha)).collect();
    product_weights(&eta, total_interbank, Method::Fitness)
}

fn product_weights(score: &[f64], total: f64, method: Method) -> Result<ExposureMatrix> {
    let n = score.len();
    if n < 2 {
        return Err(ReconstructError::TooFewBanks { need: 2, got: n });
    }
    let sum: f64 = score.iter().sum();
    let sum_sq: f64 = score.iter().map(|s| s * s).sum();
    let off_diag = sum * sum - sum_sq;
    if !(off_diag > 0.0) {
        return Err(ReconstructError::ZeroTotal);
    }
    let mut x = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { score[i] * score[j] });
    // Normalise by the realised sum so the total is exact to rounding.
    let realised = x.sum();
    x *= total / realised;
    let mut m = ExposureMatrix::new(x, Vec::new(), Vec::new(), method);
    m.row_targets = m.row_sums();
    m.col_targets = m.col_sums();
    m.marginals_fitted = false;
    Ok(m)
}

/// Sparse feasible plan: repeatedly pair the bank with the largest unmet row
/// target with the bank (other than itself) holding the largest unmet column
/// target and assign the smaller residual.
///
/// When the only mass left sits on one bank's own row and column, it is
/// routed through an existing off-diagonal entry `(a, b)` as `(a, p)` plus
/// `(p, b)`. Feasibility of the margins guarantees enough such mass exists.
pub fn min_density(a: &[f64], l: &[f64]) -> Result<ExposureMatrix> {
    check_margins(a, l)?;
    let n = a.len();
    let scale = a.iter().chain(l).copied().fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut r = a.to_vec();
    let mut c = l.to_vec();
    let mut x = DMatrix::<f64>::zeros(n, n);

    let argmax_excluding = |v: &[f64], skip: usize| -> Option<usize> {
        (0..n)
            .filter(|&k| k != skip && v[k] > tol)
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if v[b] >= v[k] => Some(b),
                _ => Some(k),
            })
    };
    let settle = |v: &mut f64| {
        if *v <= tol {
            *v = 0.0;
        }
    };

    // Each productive step zeroes at least one of the 2n residuals.
    for _ in 0..4 * n + 4 {
        let i = argmax_excluding(&r, usize::MAX);
        let j = argmax_excluding(&c, usize::MAX);
        let (Some(i), Some(j)) = (i, j) else { break };
        if let Some(jj) = argmax_excluding(&c, i) {
            let m = r[i].min(c[jj]);
            x[(i, jj)] += m;
            r[i] -= m;
            c[jj] -= m;
            settle(&mut r[i]);
            settle(&mut c[jj]);
        } else if let Some(k) = argmax_excluding(&r, j) {
            let m = r[k].min(c[j]);
            x[(k, j)] += m;
            r[k] -= m;
            c[j] -= m;
            settle(&mut r[k]);
            settle(&mut c[j]);
        } else {
            // Only bank p's own row and column remain.
            let p = i;
            let mut d = r[p].min(c[p]);
            while d > tol {
                let mut best: Option<((u8, f64), usize, usize)> = None;
                for s in 0..n {
                    for t in 0..n {
                        if s == p || t == p || s == t || x[(s, t)] <= 0.0 {
                            continue;
                        }
                        let reuse = u8::from(x[(s, p)] > 0.0)
                            + u8::from(x[(p, t)] > 0.0)
                            + u8::from(x[(s, t)] <= d);
                        let key = (reuse, x[(s, t)].min(d));
                        if best.is_none_or(|(bk, _, _)| key > bk) {
                            best = Some((key, s, t));
                        }
                    }
                }
                let Some((_, s, t)) = best else {
                    return Err(ReconstructError::Infeasible(p));
                };
                let m = x[(s, t)].min(d);
                x[(s, t)] -= m;
                x[(s, p)] += m;
                x[(p, t)] += m;
                d -= m;
            }
            r[p] = 0.0;
            c[p] = 0.0;
        }
    }
    let mut m = ExposureMatrix::new(x, a.to_vec(), l.to_vec(), Method::MinDensity);
    let residual = m.marginal_residual();
    if residual > MARGINAL_TOLERANCE * scale {
        return Err(ReconstructError::NotConverged { sweeps: 0, residual });
    }
    m.marginals_fitted = true;
    Ok(m)
}

/// Zero every pair whose combined exposure `xᵢⱼ + xⱼᵢ` is at or below
/// `epsilon`. Marginals are not re-fitted.
pub fn apply_threshold(x: &ExposureMatrix, epsilon: f64) -> ExposureMatrix {
    let mut out = x.clone();
    let n = x.len();
    let mut removed = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = x.values[(i, j)] + x.values[(j, i)];
            if s <= epsilon && s > 0.0 {
                removed += 1;
            }
            if s <= epsilon {
                out.values[(i, j)] = 0.0;
                out.values[(j, i)] = 0.0;
            }
        }
    }
    out.thresholded = true;
    if removed > 0 {
        out.marginals_fitted = false;
        out.warnings
            .push(format!("{removed} pairs at or below threshold {epsilon} removed; marginals no longer match"));
    }
    if out.total() == 0.0 && x.total() > 0.0 {
        out.warnings.push("every exposure is at or below the threshold".to_owned());
    }
    out
}

/// Aggregates plus the configured method, labelled with `bank_ids`.
pub fn reconstruct(bank_ids: &[String], assets: &[f64], cfg: &ReconstructionConfig) -> Result<ExposureMatrix> {
    cfg.validate()?;
    if bank_ids.len() != assets.len() {
        return Err(ReconstructError::LengthMismatch(bank_ids.len(), assets.len()));
    }
    let (a, l) = interbank_aggregates(assets, &cfg.ratio_rule)?;
    let total: f64 = a.iter().sum();
    let m = match cfg.method {
        Method::MaxEntropy => max_entropy(&a, &l)?,
        Method::Kde => kde_weights(&a, total)?,
        Method::Fitness => fitness_model(&a, cfg.fitness_alpha, total)?,
        Method::MinDensity => min_density(&a, &l)?,
    };
    Ok(m.with_ids(bank_ids.to_vec()))
}
