use thiserror::Error;

use crate::surrogate::ConsistencyReport;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value (boundaries, thresholds, penalty, grid) is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// The surrogate parameters violate a consistency condition.
    #[error("surrogate is not minimally consistent: {}", .0.summary())]
    Inconsistent(Box<ConsistencyReport>),

    /// A consistency threshold coincides with a hinge point.
    #[error("degenerate surrogate: {0}")]
    Degenerate(String),

    /// Malformed tabular or JSON input.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
