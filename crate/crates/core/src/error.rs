//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry construction, simulation, reconstruction,
/// phantom generation, metrics and container I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value or argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pixel lies outside the acquisition time window.
    #[error(
        "pixel at distance {distance_m} m needs sample index {needed_samples:.3} \
         but only {available_samples} samples are available"
    )]
    OutsideTimeWindow {
        distance_m: f64,
        needed_samples: f64,
        available_samples: usize,
    },

    /// Two operands that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A metric has no defined value for the given inputs (e.g. boundary
    /// distance of an empty mask). Callers that can represent the sentinel
    /// should catch this variant rather than propagate it.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Phantom generation exhausted its retry budget.
    #[error("phantom generation failed: {0}")]
    PhantomGeneration(String),

    /// Malformed or corrupt container file.
    #[error("container format error: {0}")]
    ContainerFormat(String),

    /// CRC mismatch on a stored record.
    #[error("record checksum mismatch in dataset '{dataset}' record {index}")]
    ChecksumMismatch { dataset: String, index: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
