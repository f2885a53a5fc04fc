//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by simulation, retrieval, and I/O operations.
#[derive(Debug, Error)]
pub enum CsiError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or incomplete configuration (window mismatches, bad
    /// object parameters, missing reference-phase settings, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced or encountered a non-finite or degenerate value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Quadrature failed its convergence contract: doubling the radial
    /// resolution moved at least one table entry by more than the tolerance.
    #[error("quadrature resolution error: {0}")]
    Resolution(String),

    /// Malformed input data, reported with the byte offset of the defect.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Measured rates are mutually inconsistent beyond tolerance.
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    /// The requested mode of operation is physically unsupported.
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    /// The object blocks all amplitude inside the detection window, so no
    /// normalized spectrum exists.
    #[error("no transmitted amplitude: {0}")]
    NoTransmission(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CsiError>;
