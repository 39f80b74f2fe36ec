//! Error type shared across the library.

use thiserror::Error;

/// Everything that can go wrong inside the library proper.
///
/// I/O failures are deliberately absent: the library computes, the CLI
/// owns files.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition (K < 2, eps out of
    /// range, zero-length channel, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two containers that must agree in size do not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Some element has no samples in any bucket, so a conditional argmax
    /// is undefined.
    #[error("element {element} has no samples in any phase bucket")]
    InsufficientSamples { element: usize },

    /// An operation needs complex sample means but the dataset was
    /// simulated without recording them.
    #[error("complex sample means required but absent; re-simulate with complex mode on")]
    MissingComplexData,

    /// An exhaustive search would exceed its enumeration budget.
    #[error("search space of {required} configurations exceeds limit {limit}")]
    BudgetExceeded { required: u128, limit: u128 },

    /// Config text rejected, with the 1-based offending line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
