use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contagion_core::reconstruct::{Method, RatioRule};
use contagion_core::stats::{BootstrapConfig, Outcome, XminRule};

use crate::config::{RunConfig, OUTPUT_DIR_ENV};
use crate::error::{CliError, Result};
use crate::output::{self, write_atomic, Table};
use crate::pipeline::{self, FitSource};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "contagion-lab", version, about = "Interbank network reconstruction and contagion analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-year λ₂, decay rate, critical distance and topology.
    Analyze(Common),
    /// λ₂ over a grid of interbank ratios.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        rho_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Bank-resampling confidence interval for λ₂.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        year: Option<i32>,
        #[arg(short = 'B', long)]
        replicates: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Year-label permutation test of equal λ₂.
    Permute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        year_a: Option<i32>,
        #[arg(long)]
        year_b: Option<i32>,
        #[arg(long, default_value_t = 999)]
        n_perm: usize,
    },
    /// λ₂ against edge-weight shuffles of the same network.
    Placebo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        year: Option<i32>,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
    /// Difference-in-differences of bank size on treatment.
    Did {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        base_year: Option<i32>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long, value_enum)]
        outcome: Option<OutcomeArg>,
    },
    /// Power-law, lognormal and exponential fits with likelihood-ratio tests.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Fit degrees of the network reconstructed from the panel in
        /// --input instead of reading values.
        #[arg(long)]
        network: bool,
        #[arg(long)]
        year: Option<i32>,
        /// Use unweighted degrees with --network.
        #[arg(long)]
        unweighted: bool,
        #[arg(long, conflicts_with = "xmin_scan")]
        xmin: Option<f64>,
        /// Choose x_min by minimising the power-law KS distance.
        #[arg(long)]
        xmin_scan: bool,
    },
    /// Write a synthetic panel.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    MaxEntropy,
    Kde,
    Fitness,
    MinDensity,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::MaxEntropy => Method::MaxEntropy,
            MethodArg::Kde => Method::Kde,
            MethodArg::Fitness => Method::Fitness,
            MethodArg::MinDensity => Method::MinDensity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    LogAssets,
    Assets,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub years: Option<Vec<i32>>,
    #[arg(short, long, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Same interbank ratio for every bank.
    #[arg(long, conflicts_with = "size_dependent")]
    pub ratio: Option<f64>,
    /// 3% interbank ratio above the 75th size percentile, 7% below.
    #[arg(long)]
    pub size_dependent: bool,
    /// Pairs with combined exposure at or below this are not edges.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub fitness_alpha: Option<f64>,
    /// Diffusion coefficient D.
    #[arg(long)]
    pub diffusion: Option<f64>,
    /// Intrinsic decay κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Distress fraction for the critical distance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    /// Resolve defaults, config file and flags into one configuration.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.input {
            cfg.input_path = Some(v.clone());
        }
        if let Some(v) = &self.years {
            cfg.years = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.delimiter {
            cfg.delimiter = v;
        }
        if let Some(v) = self.method {
            cfg.method.method = v.into();
        }
        if let Some(v) = self.ratio {
            cfg.method.ratio_rule = RatioRule::Fixed(v);
        }
        if self.size_dependent {
            cfg.method.ratio_rule = RatioRule::size_dependent();
        }
        if let Some(v) = self.threshold {
            cfg.method.min_edge_threshold = v;
        }
        if let Some(v) = self.fitness_alpha {
            cfg.method.fitness_alpha = v;
        }
        if let Some(v) = self.diffusion {
            cfg.diffusion.d = v;
        }
        if let Some(v) = self.kappa {
            cfg.diffusion.kappa = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 70)]
    pub n_banks: usize,
    #[arg(long, value_delimiter = ',', default_value = "2018,2021,2023")]
    pub years: Vec<i32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub log_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub log_sd: f64,
    /// Common log-drift for each year.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub drift: Vec<f64>,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sd: f64,
    /// Proportional asset reduction of treated banks.
    #[arg(long, default_value_t = 0.0)]
    pub shrinkage: f64,
    #[arg(long, default_value_t = 2021)]
    pub shrink_from: i32,
    #[arg(long, default_value_t = 0.75)]
    pub treat_quantile: f64,
    /// CSV destination; defaults to synth.csv in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(short, long, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            n_banks: self.n_banks,
            years: self.years.clone(),
            seed: self.seed,
            log_mean: self.log_mean,
            log_sd: self.log_sd,
            drift: self.drift.clone(),
            noise_sd: self.noise_sd,
            shrinkage: self.shrinkage,
            shrink_from: self.shrink_from,
            treat_quantile: self.treat_quantile,
        }
    }
}

fn finish<T: serde::Serialize>(cfg: &RunConfig, command: &str, result: &T, table: &Table) -> Result<String> {
    let json = output::write_report(cfg, command, result)?;
    output::write_csv(cfg, command, table)?;
    Ok(format!("{}\nwrote {}\n", table.render(), json.display()))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Run one command and return the text for standard output.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Analyze(common) => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let report = with_pool(common.threads, || pipeline::cmd_analyze(&cfg))?;
            finish(&cfg, "analyze", &report, &report.table())
        }
        Command::Sweep {
            common,
            rho_min,
            rho_max,
            steps,
        } => {
            let mut cfg = common.resolve()?;
            let mut s = cfg.ratio_sweep.unwrap_or_default();
            s.min = rho_min.unwrap_or(s.min);
            s.max = rho_max.unwrap_or(s.max);
            s.steps = steps.unwrap_or(s.steps);
            cfg.ratio_sweep = Some(s);
            cfg.validate()?;
            let report = with_pool(common.threads, || pipeline::cmd_sweep(&cfg))?;
            let mut text = finish(&cfg, "sweep", &report, &report.table())?;
            for (year, e) in &report.exponents {
                text.push_str(&format!("scaling exponent {year}: {e:.6}\n"));
            }
            Ok(text)
        }
        Command::Bootstrap {
            common,
            year,
            replicates,
            level,
        } => {
            let mut cfg = common.resolve()?;
            let mut b = cfg.bootstrap.unwrap_or(BootstrapConfig {
                seed: cfg.seed,
                ..BootstrapConfig::default()
            });
            b.replicates = replicates.unwrap_or(b.replicates);
            b.level = level.unwrap_or(b.level);
            if let Some(seed) = common.seed {
                b.seed = seed;
            }
            cfg.bootstrap = Some(b);
            cfg.validate()?;
            let report = with_pool(common.threads, || pipeline::cmd_bootstrap(&cfg, year))?;
            finish(&cfg, "bootstrap", &report, &report.table())
        }
        Command::Permute {
            common,
            year_a,
            year_b,
            n_perm,
        } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let report = with_pool(common.threads, || pipeline::cmd_permute(&cfg, year_a, year_b, n_perm))?;
            finish(&cfg, "permute", &report, &report.table())
        }
        Command::Placebo { common, year, draws } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let report = with_pool(common.threads, || pipeline::cmd_placebo(&cfg, year, draws))?;
            finish(&cfg, "placebo", &report, &report.table())
        }
        Command::Did {
            common,
            base_year,
            quantile,
            outcome,
        } => {
            let mut cfg = common.resolve()?;
            let mut d = cfg.did.clone().unwrap_or_default();
            d.base_year = base_year.or(d.base_year);
            d.quantile = quantile.unwrap_or(d.quantile);
            if let Some(o) = outcome {
                d.outcome = match o {
                    OutcomeArg::LogAssets => Outcome::LogAssets,
                    OutcomeArg::Assets => Outcome::Assets,
                };
            }
            cfg.did = Some(d);
            cfg.validate()?;
            let report = pipeline::cmd_did(&cfg)?;
            finish(&cfg, "did", &report, &report.table())
        }
        Command::Fit {
            common,
            network,
            year,
            unweighted,
            xmin,
            xmin_scan,
        } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let source = if network {
                FitSource::Network {
                    year,
                    weighted: !unweighted,
                }
            } else {
                FitSource::Values {
                    path: cfg.input()?.to_path_buf(),
                }
            };
            let rule = match (xmin, xmin_scan) {
                (Some(x), _) => XminRule::Fixed(x),
                (None, true) => XminRule::KsScan,
                (None, false) => XminRule::Minimum,
            };
            let report = pipeline::cmd_fit(&cfg, source, rule)?;
            let mut text = finish(&cfg, "fit", &report, &report.table())?;
            text.push_str(&report.summary());
            Ok(text)
        }
        Command::Synth(args) => {
            let scfg = args.config();
            let panel = synth::synth_panel(&scfg).map_err(|e| CliError::Usage(e.to_string()))?;
            let cfg = RunConfig {
                output_dir: args.output_dir.clone().unwrap_or_else(|| RunConfig::default().output_dir),
                seed: scfg.seed,
                years: scfg.years.clone(),
                ..RunConfig::default()
            };
            let path = match &args.output {
                Some(p) => p.clone(),
                None => {
                    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
                    cfg.output_dir.join("synth.csv")
                }
            };
            let mut bytes = Vec::new();
            panel.write_csv(&mut bytes).map_err(|e| CliError::Usage(e.to_string()))?;
            write_atomic(&path, &bytes)?;
            Ok(format!("wrote {} ({} banks, {} years)\n", path.display(), scfg.n_banks, panel.years().len()))
        }
    }
}
