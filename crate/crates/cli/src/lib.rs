//! Stage orchestration for the `scglove` command-line tool: per-stage
//! artifacts with hash manifests, a JSON pipeline config, multi-trial runs
//! and the aggregated report.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use std::fmt;
use std::path::Path;

/// Failure of a subcommand, split by exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags or configuration values. Exit code 1.
    Usage(String),
    /// Missing, malformed or stale artifacts. Exit code 2.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<scglove::Error> for CliError {
    fn from(e: scglove::Error) -> Self {
        match e {
            scglove::Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Fails with a data error naming `path` when it does not exist.
pub fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing artifact: expected {}", path.display())))
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
