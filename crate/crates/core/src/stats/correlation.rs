use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    Levels,
    Changes,
    PctChanges,
}

fn transform(v: &[f64], mode: CorrelationMode) -> Result<Vec<f64>> {
    Ok(match mode {
        CorrelationMode::Levels => v.to_vec(),
        CorrelationMode::Changes => v.windows(2).map(|w| w[1] - w[0]).collect(),
        CorrelationMode::PctChanges => {
            if v[..v.len() - 1].contains(&0.0) {
                return Err(StatsError::InvalidParameter("percentage change from zero".into()));
            }
            v.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect()
        }
    })
}

/// Pearson correlation of two series after the chosen transformation.
pub fn series_correlation(a: &[f64], b: &[f64], mode: CorrelationMode) -> Result<f64> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let need = if mode == CorrelationMode::Levels { 2 } else { 3 };
    if a.len() < need {
        return Err(StatsError::TooFewPoints { need, got: a.len() });
    }
    util::pearson(&transform(a, mode)?, &transform(b, mode)?).ok_or(StatsError::ZeroVariance)
}
