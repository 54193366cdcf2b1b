use std::path::{Path, PathBuf};

use crivet::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] crivet::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 0 success, 1 I/O, 2 validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Json(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
