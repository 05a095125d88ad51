//! Command-line front end: configuration files with presets, run
//! orchestration, checkpoint and CSV IO, and benchmark reports.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::PathBuf;

/// Command-level error with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 2).
    Config(String),
    /// Training diverged; outputs up to the last finite epoch were written
    /// to the run directory (exit 3).
    Divergence { out_dir: PathBuf },
    /// IO failure (exit 1).
    Io(std::io::Error),
    /// Any other runtime failure (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence { .. } => 3,
            CliError::Io(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Divergence { out_dir } => write!(
                f,
                "training diverged; last finite checkpoint written to {}",
                out_dir.display()
            ),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<ddpinn_core::Error> for CliError {
    fn from(e: ddpinn_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Environment variable overriding the default output root.
pub const OUT_DIR_ENV: &str = "DDPINN_OUT_DIR";
