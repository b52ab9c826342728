//! Configuration, output writers and subcommands of the `emacreg` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Solver(#[from] emacreg::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 1 for usage and configuration errors, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
