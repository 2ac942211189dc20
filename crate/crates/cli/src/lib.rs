//! Scenario runner behind the `kinex` binary.

pub mod run;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: String, message: String },
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 2,
            _ => 1,
        }
    }
}

/// Worker count: `KINEX_THREADS` when set, else the configured value.
pub fn worker_count(configured: usize) -> Result<usize, CliError> {
    match std::env::var("KINEX_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!("KINEX_THREADS = {v:?} is not a positive integer"))),
        },
        Err(_) => Ok(configured),
    }
}
