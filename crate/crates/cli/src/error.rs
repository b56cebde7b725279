use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("solver failure at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: apfv_core::Error,
    },

    #[error("final time not reached within {steps} steps (t = {time:e})")]
    StepBudget { steps: usize, time: f64 },

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("inequality check failed: {0}")]
    Assertion(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver { .. } | CliError::StepBudget { .. } | CliError::Io { .. } => 3,
            CliError::Assertion(_) => 4,
        }
    }

    pub(crate) fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
