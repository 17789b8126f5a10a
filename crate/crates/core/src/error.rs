use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty index subset")]
    EmptySubset,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// A computation produced a value that cannot be trusted
    /// (non-finite, wrong sign, failed convergence without fallback).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Input data unusable for the requested estimator.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    Version { expected: String, found: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Coarse classification used by the command-line front end.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Domain(_)
            | Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySubset
            | Error::IndexOutOfRange { .. }
            | Error::Refused(_) => ErrorKind::Usage,
            Error::Degenerate(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Io(_) => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
