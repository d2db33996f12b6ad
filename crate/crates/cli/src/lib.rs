//! Command-line pipeline around the estimator crate: simulate datasets,
//! fit directions, select the truncation rank by cross-validation, predict
//! responses for new curves, and emit conditioning diagnostics.

pub mod commands;
pub mod format;

use thiserror::Error;

/// Errors carry the exit code policy: 2 usage, 3 data, 4 numerical.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<fsir::Error> for CliError {
    fn from(e: fsir::Error) -> CliError {
        match e.kind() {
            fsir::ErrorKind::Argument => CliError::Usage(e.to_string()),
            fsir::ErrorKind::Data => CliError::Data(e.to_string()),
            fsir::ErrorKind::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}
