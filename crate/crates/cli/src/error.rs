use std::fmt;

use dimer_core::DimerError;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// A scientific check did not pass (exit 1).
    Check(String),
    /// Bad flags, config or files (exit 2).
    Usage(String),
    /// Not enough samples for a reliable estimate (exit 3).
    Insufficient(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Insufficient(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Insufficient(m) => write!(f, "insufficient samples: {m}"),
        }
    }
}

impl From<DimerError> for CliError {
    fn from(e: DimerError) -> Self {
        match e {
            DimerError::InvalidParameter(_) | DimerError::Parse(_) | DimerError::SizeLimitExceeded { .. } => {
                CliError::Usage(e.to_string())
            }
            DimerError::InsufficientSamples(m) => CliError::Insufficient(m),
            _ => CliError::Check(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}
