//! Command implementations. Each returns a serializable report; writing
//! files and printing is left to the caller.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use contagion_core::contagion;
use contagion_core::graph::{self, SolverChoice, TopologyReport, WeightedNetwork};
use contagion_core::ingest::{self, BankPanel, IngestError};
use contagion_core::reconstruct::{self, ExposureMatrix, RatioRule, ReconstructionConfig};
use contagion_core::stats::{
    self, BootstrapConfig, BootstrapResult, DidResult, DidSpec, FitComparison, PermutationResult, PlaceboResult,
    XminRule,
};
use contagion_core::util;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SweepConfig};
use crate::error::{CliError, Context, Result};
use crate::output::{num, Table};

pub fn load_input(cfg: &RunConfig) -> Result<BankPanel> {
    let path = cfg.input()?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest::load_panel(file, &cfg.schema()?).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

/// Configured years, or every panel year when none are configured.
pub fn selected_years(cfg: &RunConfig, panel: &BankPanel) -> Result<Vec<i32>> {
    if cfg.years.is_empty() {
        return Ok(panel.years().to_vec());
    }
    let mut years = cfg.years.clone();
    years.sort_unstable();
    years.dedup();
    if let Some(y) = years.iter().find(|y| !panel.years().contains(y)) {
        return Err(CliError::Usage(format!("year {y} is not in the input")));
    }
    Ok(years)
}

/// Reconstructed exposures and thresholded network of one year.
pub fn year_network(
    panel: &BankPanel,
    year: i32,
    method: &ReconstructionConfig,
) -> Result<(ExposureMatrix, WeightedNetwork)> {
    let (ids, assets) = panel.year_assets(year).context(|| format!("year {year}"))?;
    let x = reconstruct::reconstruct(&ids, &assets, method).context(|| format!("reconstruction for {year}"))?;
    let net = graph::build_network(&x, method.min_edge_threshold);
    Ok((x, net))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub solver: SolverChoice,
    pub spectrum_complete: bool,
    pub n_edges: usize,
    pub component_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearReport {
    pub year: i32,
    pub n_banks: usize,
    pub lambda2: f64,
    pub kappa_eff: f64,
    /// Critical distance at the configured ε.
    pub d_star: f64,
    pub topology: Option<TopologyReport>,
    pub spectrum: SpectrumSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearChange {
    pub from: i32,
    pub to: i32,
    pub lambda2_pct: f64,
    pub kappa_eff_pct: f64,
    /// `√(λ₂,to / λ₂,from)`.
    pub kappa_ratio: f64,
    pub d_star_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub years: Vec<YearReport>,
    /// Each year against the previous one.
    pub changes: Vec<YearChange>,
    /// Last year against the first, when there are at least two.
    pub overall: Option<YearChange>,
}

fn year_report(panel: &BankPanel, year: i32, cfg: &RunConfig) -> Result<YearReport> {
    let (x, net) = year_network(panel, year, &cfg.method)?;
    let spec = graph::laplacian_spectrum(&net).context(|| format!("spectrum for {year}"))?;
    let kappa_eff = contagion::effective_decay(spec.lambda2, &cfg.diffusion).context(|| format!("decay for {year}"))?;
    let d_star = contagion::critical_distance(kappa_eff, cfg.epsilon).context(|| format!("distance for {year}"))?;
    let mut warnings = x.warnings.clone();
    let topology = match graph::topology_report(&net) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("topology unavailable: {e}"));
            None
        }
    };
    Ok(YearReport {
        year,
        n_banks: net.len(),
        lambda2: spec.lambda2,
        kappa_eff,
        d_star,
        topology,
        spectrum: SpectrumSummary {
            solver: spec.solver,
            spectrum_complete: spec.spectrum_complete,
            n_edges: net.edge_count(),
            component_sizes: spec.component_sizes,
        },
        warnings,
    })
}

fn pct(new: f64, old: f64) -> f64 {
    100.0 * (new / old - 1.0)
}

fn change(a: &YearReport, b: &YearReport) -> Result<YearChange> {
    Ok(YearChange {
        from: a.year,
        to: b.year,
        lambda2_pct: pct(b.lambda2, a.lambda2),
        kappa_eff_pct: pct(b.kappa_eff, a.kappa_eff),
        kappa_ratio: contagion::kappa_ratio(b.lambda2, a.lambda2).context(|| format!("{} to {}", a.year, b.year))?,
        d_star_pct: pct(b.d_star, a.d_star),
    })
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeReport> {
    let panel = load_input(cfg)?;
    analyze_panel(&panel, cfg)
}

pub fn analyze_panel(panel: &BankPanel, cfg: &RunConfig) -> Result<AnalyzeReport> {
    let years = selected_years(cfg, panel)?;
    let reports: Vec<YearReport> = years.par_iter().map(|&y| year_report(panel, y, cfg)).collect::<Result<_>>()?;
    let changes = reports.windows(2).map(|w| change(&w[0], &w[1])).collect::<Result<_>>()?;
    let overall = match (reports.first(), reports.last()) {
        (Some(a), Some(b)) if reports.len() >= 2 => Some(change(a, b)?),
        _ => None,
    };
    Ok(AnalyzeReport {
        years: reports,
        changes,
        overall,
    })
}

impl AnalyzeReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["year", "banks", "lambda2", "d_lambda2_%", "kappa_eff", "d_kappa_%", "d_star"]);
        for r in &self.years {
            let c = self.changes.iter().find(|c| c.to == r.year);
            t.push([
                r.year.to_string(),
                r.n_banks.to_string(),
                num(Some(r.lambda2), 2),
                num(c.map(|c| c.lambda2_pct), 1),
                num(Some(r.kappa_eff), 2),
                num(c.map(|c| c.kappa_eff_pct), 1),
                num(Some(r.d_star), 4),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub year: i32,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChange {
    pub rho: f64,
    pub from: i32,
    pub to: i32,
    pub lambda2_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: SweepConfig,
    /// Ordered by ratio, then year.
    pub rows: Vec<SweepRow>,
    /// First to last year for each ratio.
    pub changes: Vec<SweepChange>,
    /// Largest minus smallest percentage change across ratios.
    pub change_spread_pp: Option<f64>,
    /// Slope of `ln λ₂` on `ln ρ` per year; needs two distinct ratios.
    pub exponents: BTreeMap<i32, f64>,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let panel = load_input(cfg)?;
    sweep_panel(&panel, cfg)
}

pub fn sweep_panel(panel: &BankPanel, cfg: &RunConfig) -> Result<SweepReport> {
    let sweep = cfg.ratio_sweep.unwrap_or_default();
    let years = selected_years(cfg, panel)?;
    let grid = sweep.grid();
    let points: Vec<(f64, i32)> = grid.iter().flat_map(|&r| years.iter().map(move |&y| (r, y))).collect();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(rho, year)| {
            let method = ReconstructionConfig {
                ratio_rule: RatioRule::Fixed(rho),
                ..cfg.method.clone()
            };
            let (_, net) = year_network(panel, year, &method)?;
            let lambda2 = graph::laplacian_spectrum(&net)
                .context(|| format!("spectrum for {year} at ratio {rho}"))?
                .lambda2;
            Ok(SweepRow { rho, year, lambda2 })
        })
        .collect::<Result<_>>()?;

    let mut changes = Vec::new();
    if years.len() >= 2 {
        let (first, last) = (years[0], years[years.len() - 1]);
        for chunk in rows.chunks(years.len()) {
            changes.push(SweepChange {
                rho: chunk[0].rho,
                from: first,
                to: last,
                lambda2_pct: pct(chunk[chunk.len() - 1].lambda2, chunk[0].lambda2),
            });
        }
    }
    let change_spread_pp = (!changes.is_empty()).then(|| {
        let (lo, hi) = changes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.lambda2_pct), hi.max(c.lambda2_pct)));
        hi - lo
    });
    let mut exponents = BTreeMap::new();
    if grid.len() >= 2 {
        for (k, &year) in years.iter().enumerate() {
            let xs: Vec<f64> = grid.iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = rows.iter().skip(k).step_by(years.len()).map(|r| r.lambda2.ln()).collect();
            exponents.insert(year, util::linear_fit(&xs, &ys).0);
        }
    }
    Ok(SweepReport {
        sweep,
        rows,
        changes,
        change_spread_pp,
        exponents,
    })
}

impl SweepReport {
    pub fn table(&self) -> Table {
        let first = self.rows.first().map(|r| r.rho);
        let years: Vec<i32> = self.rows.iter().take_while(|r| Some(r.rho) == first).map(|r| r.year).collect();
        let mut header = vec!["rho".to_string()];
        header.extend(years.iter().map(|y| format!("lambda2_{y}")));
        header.push("change_%".into());
        let mut t = Table::new(header);
        for chunk in self.rows.chunks(years.len().max(1)) {
            let mut row = vec![format!("{:.4}", chunk[0].rho)];
            row.extend(chunk.iter().map(|r| num(Some(r.lambda2), 4)));
            let c = self.changes.iter().find(|c| c.rho == chunk[0].rho).map(|c| c.lambda2_pct);
            row.push(num(c, 2));
            t.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub year: i32,
    pub result: BootstrapResult,
}

/// Bootstrap λ₂ for `year`, or the last selected year.
pub fn cmd_bootstrap(cfg: &RunConfig, year: Option<i32>) -> Result<BootstrapReport> {
    let panel = load_input(cfg)?;
    let year = pick_year(cfg, &panel, year, true)?;
    let boot = cfg.bootstrap.unwrap_or(BootstrapConfig {
        seed: cfg.seed,
        ..BootstrapConfig::default()
    });
    let (_, assets) = panel.year_assets(year).context(|| format!("year {year}"))?;
    let result = stats::bootstrap_lambda2(&assets, &cfg.method, &boot).context(|| format!("bootstrap for {year}"))?;
    Ok(BootstrapReport { year, result })
}

impl BootstrapReport {
    pub fn table(&self) -> Table {
        let r = &self.result;
        let mut t = Table::new(["year", "lambda2", "ci_low", "ci_high", "level", "B"]);
        t.push([
            self.year.to_string(),
            num(Some(r.point), 4),
            num(Some(r.ci_low), 4),
            num(Some(r.ci_high), 4),
            format!("{}", r.level),
            format!("{}/{}", r.b_effective, r.b_requested),
        ]);
        t
    }
}

fn pick_year(cfg: &RunConfig, panel: &BankPanel, year: Option<i32>, last: bool) -> Result<i32> {
    let years = selected_years(cfg, panel)?;
    match year {
        Some(y) if panel.years().contains(&y) => Ok(y),
        Some(y) => Err(CliError::Usage(format!("year {y} is not in the input"))),
        None if last => Ok(years[years.len() - 1]),
        None => Ok(years[0]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermuteReport {
    pub year_a: i32,
    pub year_b: i32,
    pub result: PermutationResult,
}

/// Year-label permutation test of equal λ₂, by default first against last
/// selected year.
pub fn cmd_permute(cfg: &RunConfig, year_a: Option<i32>, year_b: Option<i32>, n_perm: usize) -> Result<PermuteReport> {
    let panel = load_input(cfg)?;
    let a = pick_year(cfg, &panel, year_a, false)?;
    let b = pick_year(cfg, &panel, year_b, true)?;
    if a == b {
        return Err(CliError::Usage(format!("permutation needs two different years, got {a} twice")));
    }
    let result = stats::year_label_permutation(&panel, a, b, &cfg.method, n_perm, cfg.seed)
        .context(|| format!("permutation {a} vs {b}"))?;
    Ok(PermuteReport {
        year_a: a,
        year_b: b,
        result,
    })
}

impl PermuteReport {
    pub fn table(&self) -> Table {
        let r = &self.result;
        let mut t = Table::new(["years", "difference", "p_value", "relabelings", "exact"]);
        t.push([
            format!("{}-{}", self.year_a, self.year_b),
            num(Some(r.observed), 4),
            num(Some(r.p_value), 4),
            r.n_perm.to_string(),
            r.exact.to_string(),
        ]);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub year: i32,
    pub result: PlaceboResult,
}

pub fn cmd_placebo(cfg: &RunConfig, year: Option<i32>, draws: usize) -> Result<PlaceboReport> {
    let panel = load_input(cfg)?;
    let year = pick_year(cfg, &panel, year, true)?;
    let (_, net) = year_network(&panel, year, &cfg.method)?;
    let result = stats::placebo_null(&net, draws, cfg.seed).context(|| format!("placebo for {year}"))?;
    Ok(PlaceboReport { year, result })
}

impl PlaceboReport {
    pub fn table(&self) -> Table {
        let r = &self.result;
        let mut sorted = r.null.clone();
        sorted.sort_by(f64::total_cmp);
        let mut t = Table::new(["year", "lambda2", "null_median", "percentile", "draws"]);
        t.push([
            self.year.to_string(),
            num(Some(r.observed), 4),
            num(Some(util::quantile_sorted(&sorted, 0.5)), 4),
            num(r.percentile, 1),
            r.null.len().to_string(),
        ]);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidReport {
    pub base_year: i32,
    pub quantile: f64,
    /// Base-year asset level a bank must exceed to be treated.
    pub threshold: f64,
    pub result: DidResult,
}

pub fn cmd_did(cfg: &RunConfig) -> Result<DidReport> {
    let panel = load_input(cfg)?;
    did_panel(&panel, cfg)
}

pub fn did_panel(panel: &BankPanel, cfg: &RunConfig) -> Result<DidReport> {
    let did = cfg.did.clone().unwrap_or_default();
    let years = selected_years(cfg, panel)?;
    let panel = panel.select_years(&years).context(|| "selecting years".into())?;
    let base_year = did.base_year.unwrap_or(years[0]);
    let treatment = ingest::assign_treatment(&panel, base_year, did.quantile).context(|| format!("treatment at {base_year}"))?;
    let spec = if did.interactions.is_empty() {
        DidSpec {
            outcome: did.outcome,
            ..DidSpec::event_study(&panel, base_year)
        }
    } else {
        DidSpec {
            terms: did.interactions.clone(),
            outcome: did.outcome,
            ..DidSpec::default()
        }
    };
    let result = stats::did_regress(&panel, &treatment, &spec).context(|| "difference-in-differences".into())?;
    Ok(DidReport {
        base_year,
        quantile: did.quantile,
        threshold: treatment.threshold,
        result,
    })
}

impl DidReport {
    pub fn table(&self) -> Table {
        let r = &self.result;
        let mut t = Table::new(["term", "coef", "clustered_se", "p_value"]);
        for name in &r.terms {
            t.push([
                name.clone(),
                num(r.coefficients.get(name).copied(), 4),
                num(r.clustered_se.get(name).copied(), 4),
                num(r.p_values.get(name).copied().flatten(), 4),
            ]);
        }
        t
    }
}

/// Where the fitted sample comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitSource {
    /// First column of a CSV of positive values; a non-numeric first row is
    /// taken as a header.
    Values { path: PathBuf },
    /// Degrees of the reconstructed network of a panel year.
    Network { year: Option<i32>, weighted: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub source: FitSource,
    pub result: FitComparison,
}

pub fn read_values(path: &Path, delimiter: u8) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(delimiter)
        .from_reader(file);
    let input = |source| CliError::Input {
        path: path.to_path_buf(),
        source,
    };
    let mut values = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|e| input(IngestError::Csv(e)))?;
        let field = row.get(0).unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if k == 0 => {}
            Err(_) => {
                return Err(input(IngestError::MalformedRow {
                    line: k + 1,
                    reason: format!("not a number: `{field}`"),
                }))
            }
        }
    }
    Ok(values)
}

pub fn cmd_fit(cfg: &RunConfig, source: FitSource, rule: XminRule) -> Result<FitReport> {
    let sample = match &source {
        FitSource::Values { path } => read_values(path, cfg.schema()?.delimiter)?,
        FitSource::Network { year, weighted } => {
            let panel = load_input(cfg)?;
            let year = pick_year(cfg, &panel, *year, true)?;
            let (_, net) = year_network(&panel, year, &cfg.method)?;
            graph::degree_sequence(&net, *weighted).into_iter().filter(|d| *d > 0.0).collect()
        }
    };
    let result = stats::fit::fit_distributions_with(&sample, rule).context(|| "distribution fit".into())?;
    Ok(FitReport { source, result })
}

impl FitReport {
    pub fn table(&self) -> Table {
        let r = &self.result;
        let mut t = Table::new(["model", "parameters", "ks"]);
        t.push([
            "power law".to_string(),
            format!("alpha={} xmin={}", num(Some(r.alpha_hat), 3), num(Some(r.x_min), 3)),
            num(Some(r.ks_power_law), 4),
        ]);
        t.push([
            "lognormal".to_string(),
            format!("mu={} sigma={}", num(Some(r.lognormal_mu), 3), num(Some(r.lognormal_sigma), 3)),
            num(Some(r.ks_lognormal), 4),
        ]);
        t.push([
            "exponential".to_string(),
            format!("rate={}", num(Some(r.exp_rate), 4)),
            num(Some(r.ks_exponential), 4),
        ]);
        t
    }

    /// Summary lines printed under the table.
    pub fn summary(&self) -> String {
        let r = &self.result;
        let best = match r.best_fit {
            stats::BestFit::PowerLaw => "Power Law",
            stats::BestFit::Lognormal => "Lognormal",
            stats::BestFit::Inconclusive => "Inconclusive",
        };
        format!(
            "LR (power law vs lognormal): {} (z = {}, p = {})\nBest Fit: {best}\n",
            num(Some(r.lr_pl_vs_ln), 3),
            num(Some(r.vuong_z), 3),
            num(Some(r.p_value), 4)
        )
    }
}
