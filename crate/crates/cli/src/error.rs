use std::path::PathBuf;

use gem_core::GemError;
use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const SUPPORT_TOO_LARGE: i32 = 3;
    pub const PARTIAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] GemError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{} of {total} cells failed:\n  {}", failed.len(), failed.join("\n  "))]
    Partial { failed: Vec<String>, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(GemError::SupportTooLarge { .. }) => exit::SUPPORT_TOO_LARGE,
            CliError::Core(GemError::Io(_)) | CliError::Io { .. } => exit::FAILURE,
            CliError::Core(_) | CliError::Config { .. } | CliError::Usage(_) => exit::INVALID,
            CliError::Partial { .. } => exit::PARTIAL,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
