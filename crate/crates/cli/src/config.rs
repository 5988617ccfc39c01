//! Run configuration. Values come from, in increasing priority: built-in
//! defaults, a JSON config file, the `CONTAGION_LAB_OUTPUT_DIR` environment
//! variable (output directory only) and command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use contagion_core::contagion::DiffusionParams;
use contagion_core::ingest::Schema;
use contagion_core::reconstruct::ReconstructionConfig;
use contagion_core::stats::{BootstrapConfig, Outcome, Term};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUTPUT_DIR_ENV: &str = "CONTAGION_LAB_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl SweepConfig {
    /// Evenly spaced ratios from `min` to `max`; a single point when they
    /// coincide.
    pub fn grid(&self) -> Vec<f64> {
        if self.min == self.max || self.steps <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| if k + 1 == self.steps { self.max } else { self.min + step * k as f64 })
            .collect()
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            min: 0.01,
            max: 0.10,
            steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DidConfig {
    pub base_year: Option<i32>,
    pub quantile: f64,
    pub outcome: Outcome,
    /// Regression terms; empty means treated × year for each later year.
    pub interactions: Vec<Term>,
}

impl Default for DidConfig {
    fn default() -> Self {
        Self {
            base_year: None,
            quantile: 0.75,
            outcome: Outcome::LogAssets,
            interactions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input_path: Option<PathBuf>,
    /// Years to analyse; empty means every year in the input.
    pub years: Vec<i32>,
    pub delimiter: char,
    pub method: ReconstructionConfig,
    pub ratio_sweep: Option<SweepConfig>,
    pub bootstrap: Option<BootstrapConfig>,
    pub did: Option<DidConfig>,
    pub diffusion: DiffusionParams,
    /// Distress fraction defining the critical distance.
    pub epsilon: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            years: Vec::new(),
            delimiter: ',',
            method: ReconstructionConfig::default(),
            ratio_sweep: None,
            bootstrap: None,
            did: None,
            diffusion: DiffusionParams::new(1.0, 0.0),
            epsilon: 0.1,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn schema(&self) -> Result<Schema> {
        let delimiter = u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| CliError::Usage(format!("delimiter must be a single ASCII character, got {:?}", self.delimiter)))?;
        Ok(Schema {
            delimiter,
            ..Schema::default()
        })
    }

    pub fn input(&self) -> Result<&Path> {
        self.input_path
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input file given (use --input)".into()))
    }

    /// Check parameter ranges and that the output directory can be written.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if let Err(e) = self.method.validate() {
            return usage(e.to_string());
        }
        if let Err(e) = self.diffusion.validate() {
            return usage(e.to_string());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return usage(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if let Some(s) = &self.ratio_sweep {
            let inside = |r: f64| r > 0.0 && r < 1.0;
            if !(inside(s.min) && inside(s.max)) || s.min > s.max || s.steps == 0 {
                return usage(format!(
                    "ratio sweep needs 0 < min <= max < 1 and steps >= 1, got {}..{} in {} steps",
                    s.min, s.max, s.steps
                ));
            }
        }
        if let Some(b) = &self.bootstrap {
            if b.replicates < 10 || !(b.level > 0.0 && b.level < 1.0) {
                return usage(format!("bootstrap needs B >= 10 and level in (0, 1), got {} and {}", b.replicates, b.level));
            }
        }
        if let Some(d) = &self.did {
            if !(d.quantile > 0.0 && d.quantile < 1.0) {
                return usage(format!("did quantile must lie in (0, 1), got {}", d.quantile));
            }
        }
        self.check_output_dir()
    }

    fn check_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir).map_err(|e| CliError::io(&self.output_dir, e))?;
        tempfile::NamedTempFile::new_in(&self.output_dir)
            .map(drop)
            .map_err(|e| CliError::io(&self.output_dir, e))
    }
}
