use std::io;
use std::path::PathBuf;

use ppnn_core::{Error, FormatError};
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const TRAINING_DIVERGED: i32 = 4;
    pub const FORMAT: i32 = 5;
    pub const NUMERICAL: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(Error) -> CliError {
        let path = path.into();
        move |source| CliError::File { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::File { source, .. } | CliError::Core(source) => core_code(source),
        }
    }
}

fn core_code(e: &Error) -> i32 {
    match e {
        Error::TrainingDiverged { .. } => exit::TRAINING_DIVERGED,
        Error::Format(FormatError::Io(_)) => exit::IO,
        Error::Format(_) => exit::FORMAT,
        Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::UnsupportedOrder(_) => exit::CONFIG,
        _ => exit::NUMERICAL,
    }
}
