use std::io;
use std::path::{Path, PathBuf};

use semiperc_core::{AmpError, DataError, ReplicaError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: malformed dataset file: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Compute(_) => 3,
            Self::Io { .. } | Self::Format { .. } => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

impl From<ReplicaError> for HarnessError {
    fn from(e: ReplicaError) -> Self {
        Self::Compute(e.to_string())
    }
}

impl From<AmpError> for HarnessError {
    fn from(e: AmpError) -> Self {
        Self::Compute(e.to_string())
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        Self::Compute(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
