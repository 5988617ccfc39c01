use std::path::PathBuf;

use contagion_core::contagion::ContagionError;
use contagion_core::graph::GraphError;
use contagion_core::ingest::IngestError;
use contagion_core::reconstruct::ReconstructError;
use contagion_core::stats::StatsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Failures raised by the numerical modules.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Contagion(#[from] ContagionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 usage, 3 IO, 4 numeric or model failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Input { source: IngestError::Csv(e), .. } if e.is_io_error() => 3,
            CliError::Input { .. } | CliError::Model { .. } | CliError::Json(_) | CliError::Csv(_) => 4,
        }
    }
}

/// Attach a context string to a module error.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T, E: Into<ModelError>> Context<T> for Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| CliError::Model {
            context: what(),
            source: e.into(),
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
