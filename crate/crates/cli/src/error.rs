//! Errors of the command-line front end and their exit codes.

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::ingest::IngestError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Bad data that is not tied to a file row, e.g. invalid simulation truth.
    #[error("invalid input: {0}")]
    Input(String),
    #[error("output directory {0} is in use by another run (remove {0}/.lock if that run is gone)")]
    Busy(PathBuf),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Ingest(_) | CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Busy(_) | CliError::Io { .. } | CliError::Analysis(_) => EXIT_OTHER,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}
