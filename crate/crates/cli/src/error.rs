use std::path::PathBuf;

use lifschitz_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Bad flags, bad configuration, or an unusable output directory.
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] LabError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Numeric(_) | RunError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Usage(msg.into()))
}
