//! Command-line error type with process exit-code mapping.

use sropnet_core::Error as CoreError;

/// Anything a command can fail with, bucketed by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config, incompatible inputs, missing files: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Malformed or truncated data files: exit 3.
    #[error("{0}")]
    Data(String),
    /// Numerical failure (non-finite loss or parameters): exit 4.
    #[error("{0}")]
    Numeric(String),
    /// Filesystem trouble, reported with the offending path: exit 2.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Wrap an IO error with the path it struck.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub type Result<T> = core::result::Result<T, CliError>;
