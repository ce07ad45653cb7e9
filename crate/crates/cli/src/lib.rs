//! Command-line front end: file ingestion, run configuration, report and
//! plot-data emission.

pub mod config;
pub mod demo;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{Mode, RunConfig};
pub use pipeline::run;
pub use report::SensitivityReport;

/// Errors surfaced by the CLI, split by exit code: configuration and input
/// problems exit with 2, numerical failures with 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Wraps a core error raised while validating inputs.
    pub fn config_in(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{context}: {err}"))
    }

    /// Wraps a core error raised during computation.
    pub fn numeric_in(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Numeric(format!("{context}: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
