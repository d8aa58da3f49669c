//! Crate-wide error type.

use std::fmt;

/// Errors produced by any stage of the pipeline.
#[derive(Debug)]
pub enum Error {
    /// Invalid user-supplied parameter or configuration value.
    Parameter(String),
    /// Tensor or array shape mismatch.
    Shape(String),
    /// Malformed or incompatible on-disk artifact.
    Format(String),
    /// Inconsistent input data (e.g. overlapping label intervals).
    Data(String),
    /// API contract violation (e.g. non-monotonic timestamps).
    Contract(String),
    /// Training diverged or another numeric failure occurred.
    Training(String),
    /// Hyperparameter sampling could not find a valid candidate.
    SearchSpaceExhausted(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Training(m) => write!(f, "training error: {m}"),
            Error::SearchSpaceExhausted(m) => write!(f, "search space exhausted: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
