use std::fmt;
use std::process::ExitCode;

use gbspe_core::Error;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input, ill-posed instance.
    Config(String),
    /// Refused by the pair-count budget guard.
    Budget(String),
    /// Numerical failure or I/O failure while writing results.
    Internal(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Budget(_) => ExitCode::from(3),
            CliError::Internal(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Budget(m) => write!(f, "refused: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            Error::NonConvergence(_) | Error::Internal(_) => CliError::Internal(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a path to an I/O failure on the input side.
pub fn read_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Config(format!("cannot read {}: {e}", path.display()))
}

/// Attaches a path to an I/O failure on the output side.
pub fn write_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}
