use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum LdcError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unexpected end of file")]
    UnexpectedEof,

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{what}: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot fold normalization: {0}")]
    Fold(String),

    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),
}

impl LdcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            LdcError::FileNotFound(path)
        } else if source.kind() == std::io::ErrorKind::UnexpectedEof {
            LdcError::UnexpectedEof
        } else {
            LdcError::Io { path, source }
        }
    }

    /// True for errors caused by the input data rather than by the caller's configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            LdcError::FileNotFound(_)
                | LdcError::Io { .. }
                | LdcError::UnexpectedEof
                | LdcError::Format(_)
                | LdcError::CountMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LdcError>;
