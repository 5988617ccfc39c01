//! Distress diffusion on a weighted network.
//!
//! Distress evolves as `du/dt = -(D·L + κ·I)·u`, so every Laplacian eigenmode
//! decays at its own rate `D·λₖ + κ`. The slowest non-uniform mode sets the
//! temporal decay rate `γ = D·λ₂ + κ`; the spatial decay rate is
//! `κ_eff = √(λ₂/D) + κ`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, GraphError, WeightedNetwork};
use crate::util;

#[derive(Debug, Error)]
pub enum ContagionError {
    #[error("algebraic connectivity must be positive, got {0}")]
    NonPositiveLambda2(f64),
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid diffusion parameters: {0}")]
    InvalidParams(String),
    #[error("state has {got} entries, network has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network is not connected")]
    Disconnected,
    #[error("non-zero forcing terms are not supported by the diffusion solver")]
    ForcingUnsupported,
    #[error("invalid cascade configuration: {0}")]
    InvalidCascade(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

type Result<T> = std::result::Result<T, ContagionError>;

/// External distress injection at a node and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub node: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    /// Diffusion coefficient `D`.
    pub d: f64,
    /// Intrinsic decay `κ`.
    pub kappa: f64,
    #[serde(default)]
    pub forcing: Vec<Forcing>,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self::new(1.0, 0.0)
    }
}

impl DiffusionParams {
    pub fn new(d: f64, kappa: f64) -> Self {
        Self {
            d,
            kappa,
            forcing: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(ContagionError::InvalidParams(format!("D must be positive, got {}", self.d)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(ContagionError::InvalidParams(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistressState {
    pub u: Vec<f64>,
    pub t: f64,
}

impl DistressState {
    /// Unit shock at `source` at time zero.
    pub fn impulse(n: usize, source: usize) -> Self {
        let mut u = vec![0.0; n];
        u[source] = 1.0;
        Self { u, t: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.u.iter().sum()
    }
}

/// `κ_eff = √(λ₂/D) + κ`.
pub fn effective_decay(lambda2: f64, params: &DiffusionParams) -> Result<f64> {
    params.validate()?;
    if !(lambda2 > 0.0) {
        return Err(ContagionError::NonPositiveLambda2(lambda2));
    }
    Ok((lambda2 / params.d).sqrt() + params.kappa)
}

/// Distance at which a unit shock has decayed to `epsilon`: `-ln ε / κ_eff`.
pub fn critical_distance(kappa_eff: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ContagionError::InvalidEpsilon(epsilon));
    }
    if !(kappa_eff > 0.0) {
        return Err(ContagionError::InvalidParams(format!("kappa_eff must be positive, got {kappa_eff}")));
    }
    Ok(-epsilon.ln() / kappa_eff)
}

/// `√(λ₂,new / λ₂,old)`.
pub fn kappa_ratio(lambda2_new: f64, lambda2_old: f64) -> Result<f64> {
    if !(lambda2_new > 0.0) {
        return Err(ContagionError::NonPositiveLambda2(lambda2_new));
    }
    if !(lambda2_old > 0.0) {
        return Err(ContagionError::NonPositiveLambda2(lambda2_old));
    }
    Ok((lambda2_new / lambda2_old).sqrt())
}

/// First-order change in the spatial decay rate, `½(Δλ₂/λ₂ − ΔD/D)`.
pub fn prediction_proportional(d_lambda_rel: f64, d_d_rel: f64) -> f64 {
    0.5 * (d_lambda_rel - d_d_rel)
}

/// Exact counterpart of [`prediction_proportional`]:
/// `√((1 + Δλ/λ)/(1 + ΔD/D)) − 1`.
pub fn prediction_exact(d_lambda_rel: f64, d_d_rel: f64) -> f64 {
    ((1.0 + d_lambda_rel) / (1.0 + d_d_rel)).sqrt() - 1.0
}

/// Fraction of `κ_eff` contributed by network structure.
pub fn dominance_share(lambda2: f64, params: &DiffusionParams) -> Result<f64> {
    let net = effective_decay(lambda2, params)? - params.kappa;
    Ok(net / (net + params.kappa))
}

/// Eigendecomposition of `L` kept for repeated evaluation of `u(t)`.
#[derive(Debug, Clone)]
pub struct DiffusionSolver {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    params: DiffusionParams,
}

impl DiffusionSolver {
    pub fn new(net: &WeightedNetwork, params: &DiffusionParams) -> Result<Self> {
        params.validate()?;
        if params.forcing.iter().any(|f| f.value != 0.0) {
            return Err(ContagionError::ForcingUnsupported);
        }
        let eig = SymmetricEigen::new(net.laplacian());
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            params: params.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Projections `qₖᵀ u0` in the solver's eigenbasis.
    pub fn modes(&self, u0: &[f64]) -> Result<DVector<f64>> {
        self.check(u0.len())?;
        Ok(self.eigenvectors.tr_mul(&DVector::from_column_slice(u0)))
    }

    /// `u(t) = Q·diag(e^{−(Dλₖ+κ)t})·Qᵀ·u0`.
    pub fn solve(&self, u0: &DistressState, t: f64) -> Result<DistressState> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(ContagionError::InvalidParams(format!("time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            self.check(u0.u.len())?;
            return Ok(u0.clone());
        }
        let mut c = self.modes(&u0.u)?;
        for (ck, lk) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ck *= (-(self.params.d * lk.max(0.0) + self.params.kappa) * t).exp();
        }
        let u = &self.eigenvectors * c;
        Ok(DistressState {
            u: u.iter().copied().collect(),
            t: u0.t + t,
        })
    }

    fn check(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(ContagionError::DimensionMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Distress after time `t` starting from `u0`.
pub fn solve_diffusion(
    net: &WeightedNetwork,
    params: &DiffusionParams,
    u0: &DistressState,
    t: f64,
) -> Result<DistressState> {
    DiffusionSolver::new(net, params)?.solve(u0, t)
}

/// States at each of `times` (measured from `u0`).
pub fn trajectory(
    net: &WeightedNetwork,
    params: &DiffusionParams,
    u0: &DistressState,
    times: &[f64],
) -> Result<Vec<DistressState>> {
    let solver = DiffusionSolver::new(net, params)?;
    times.iter().map(|&t| solver.solve(u0, t)).collect()
}

/// Long-format CSV with columns `node,t,u`.
pub fn write_trajectory_csv<W: Write>(
    states: &[DistressState],
    bank_ids: &[String],
    writer: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "t", "u"])?;
    for s in states {
        for (id, u) in bank_ids.iter().zip(&s.u) {
            w.write_record([id.clone(), s.t.to_string(), u.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `γ = D·λ₂ + κ` of a connected network.
pub fn temporal_decay_rate(net: &WeightedNetwork, params: &DiffusionParams) -> Result<f64> {
    params.validate()?;
    if net.len() < 2 || net.components().len() != 1 {
        return Err(ContagionError::Disconnected);
    }
    let spec = graph::laplacian_spectrum(net)?;
    Ok(params.d * spec.lambda2 + params.kappa)
}

/// Time grid for checking the decay rate empirically, in units of `1/γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayGrid {
    pub points: usize,
    pub start: f64,
    pub end: f64,
    /// Only grid points at or after this time enter the slope fit.
    pub fit_from: f64,
}

impl Default for DecayGrid {
    fn default() -> Self {
        Self {
            points: 20,
            start: 0.01,
            end: 20.0,
            fit_from: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub gamma: f64,
    pub fitted_rate: f64,
    pub relative_error: f64,
    pub times: Vec<f64>,
    pub log_residual_norms: Vec<f64>,
}

/// Fit the log-norm of the non-uniform part of `u(t)` against `t` and compare
/// the slope with `−γ`.
pub fn verify_decay_rate(
    net: &WeightedNetwork,
    params: &DiffusionParams,
    u0: &DistressState,
    grid: &DecayGrid,
) -> Result<DecayCheck> {
    let gamma = temporal_decay_rate(net, params)?;
    let solver = DiffusionSolver::new(net, params)?;
    let ratio = (grid.end / grid.start).powf(1.0 / (grid.points - 1) as f64);
    let times: Vec<f64> = (0..grid.points).map(|k| grid.start * ratio.powi(k as i32) / gamma).collect();
    let mut log_norms = Vec::with_capacity(times.len());
    for &t in &times {
        let u = solver.solve(u0, t)?.u;
        let m = util::mean(&u);
        log_norms.push(u.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt().ln());
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&log_norms)
        .filter(|(t, l)| **t * gamma >= grid.fit_from * (1.0 - 1e-12) && l.is_finite())
        .map(|(t, l)| (*t, *l))
        .unzip();
    if ts.len() < 2 {
        return Err(ContagionError::InvalidParams("decay grid leaves fewer than two fit points".into()));
    }
    let (slope, _) = util::linear_fit(&ts, &ls);
    let fitted_rate = -slope;
    Ok(DecayCheck {
        gamma,
        fitted_rate,
        relative_error: (fitted_rate - gamma).abs() / gamma,
        times,
        log_residual_norms: log_norms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub source: usize,
    pub s0: f64,
    pub theta: f64,
    /// Per-step decay in `[0, 1)`.
    pub kappa: f64,
}

/// Threshold cascade from a single shocked bank.
///
/// Each sweep admits every bank above `theta` that is not yet in the cascade,
/// in ascending index order. A newly admitted bank passes `wᵢⱼ·uᵢ` to each
/// neighbour once, using its distress at admission; all distress then decays
/// by `1 − κ`. Returns the number of banks admitted.
pub fn cascade(net: &WeightedNetwork, cfg: &CascadeConfig) -> Result<usize> {
    let n = net.len();
    if cfg.source >= n {
        return Err(ContagionError::InvalidCascade(format!("source {} out of range", cfg.source)));
    }
    if !(cfg.theta > 0.0) || !(cfg.s0 > 0.0) || !(0.0..1.0).contains(&cfg.kappa) {
        return Err(ContagionError::InvalidCascade(format!(
            "need s0 > 0, theta > 0 and 0 <= kappa < 1 (s0 {}, theta {}, kappa {})",
            cfg.s0, cfg.theta, cfg.kappa
        )));
    }
    let w = net.weights();
    let mut u = vec![0.0; n];
    u[cfg.source] = cfg.s0;
    let mut in_cascade = vec![false; n];
    let mut size = 0;
    loop {
        let entrants: Vec<usize> = (0..n).filter(|&i| !in_cascade[i] && u[i] > cfg.theta).collect();
        if entrants.is_empty() {
            return Ok(size);
        }
        let entry: Vec<f64> = entrants.iter().map(|&i| u[i]).collect();
        for (&i, &ui) in entrants.iter().zip(&entry) {
            in_cascade[i] = true;
            size += 1;
            for j in 0..n {
                u[j] += w[(i, j)] * ui;
            }
        }
        u.iter_mut().for_each(|x| *x *= 1.0 - cfg.kappa);
    }
}
