//! Error type shared across the crate.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix had the wrong length for the requested operation.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Index outside the valid range.
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },
    /// `backward` was called twice on the same tape.
    TapeConsumed,
    /// `backward` was called on a node that is not a scalar.
    NonScalarRoot { len: usize },
    /// Evaluation time outside the valid interval.
    TimeOutOfRange { t: f64, min: f64, max: f64 },
    /// A sampling-box channel has `min >= max`.
    DegenerateBox { channel: usize },
    /// A computation produced NaN or infinity.
    NonFinite { context: String },
    /// A matrix required to be invertible was singular.
    SingularMatrix { context: &'static str },
    /// Invalid argument or configuration value.
    InvalidArgument { context: String },
    /// An operation was called on a model it does not apply to.
    Misuse { context: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: expected length {expected}, got {got}"),
            Error::IndexOutOfRange {
                context,
                index,
                len,
            } => write!(f, "{context}: index {index} out of range for length {len}"),
            Error::TapeConsumed => write!(f, "tape already consumed by a backward pass"),
            Error::NonScalarRoot { len } => {
                write!(f, "backward root must be scalar, got length {len}")
            }
            Error::TimeOutOfRange { t, min, max } => {
                write!(f, "time {t} outside valid interval [{min}, {max}]")
            }
            Error::DegenerateBox { channel } => {
                write!(f, "sampling box channel {channel} has min >= max")
            }
            Error::NonFinite { context } => write!(f, "non-finite value: {context}"),
            Error::SingularMatrix { context } => write!(f, "singular matrix: {context}"),
            Error::InvalidArgument { context } => write!(f, "invalid argument: {context}"),
            Error::Misuse { context } => write!(f, "misuse: {context}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
