//! Error type shared by every module in the crate.

use thiserror::Error;

/// Failure modes of the generators, solvers and serializers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a structural contract (shape, symmetry, acyclicity, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric routine could not proceed (singular factorization, non-finite values).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver failed in a way that invalidates its output.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents.
    #[error("parse: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
