use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0} invariant check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    /// Process exit status: 1 verify failure, 2 configuration or I/O problem,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::VerifyFailed(_) => 1,
            Self::Config(_)
            | Self::Read { .. }
            | Self::Json { .. }
            | Self::Write { .. }
            | Self::Csv(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
