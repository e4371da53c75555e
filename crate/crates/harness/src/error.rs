use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
    #[error("csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("numerical failure: {0}")]
    Numerical(#[from] pgld_core::Error),
    #[error("audit failed: {0}")]
    AuditFailed(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> HarnessError {
        HarnessError::Io { path: path.into(), source }
    }

    /// 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) | HarnessError::AuditFailed(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Core errors raised while assembling a configuration are input errors.
pub(crate) fn config_err(e: pgld_core::Error) -> HarnessError {
    HarnessError::Config(e.to_string())
}
