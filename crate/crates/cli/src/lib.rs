//! Command-line pipeline around `contagion-core`: run configuration,
//! subcommands, report files and synthetic panels.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod synth;

pub use cli::{run, Cli};
pub use error::CliError;
