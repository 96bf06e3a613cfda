use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, flags or inconsistent inputs (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// Some work items failed; the rest were written (exit 1).
    #[error("{0}")]
    Partial(String),
    /// A run that could not complete (exit 1).
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] ffsv_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
