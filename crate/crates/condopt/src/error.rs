//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, fitting, and queries.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sample-space definition (e.g. empty interval).
    #[error("invalid sample space: {0}")]
    InvalidSpace(String),

    /// Invalid prior hyperparameters.
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    /// A data point violates a precondition (outside its space, non-finite, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A serialized model could not be read or written.
    #[error("model serialization: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;
