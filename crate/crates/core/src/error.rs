//! Crate-wide error type.
//!
//! Everything fallible in the library funnels into [`Error`] so callers and
//! the CLI can match on one enum. Variants carry enough context to point at
//! the offending input (byte offsets for model files, line/column for text
//! parsing, coordinate indices for range violations).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument value is outside its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A non-finite value (NaN or infinity) reached a numeric routine.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A value that must already sit on a grid does not.
    #[error("value {value} is not a multiple of the grid resolution {resolution}")]
    OffGrid { value: f64, resolution: f64 },

    /// A value falls outside the representable range of a grid.
    #[error("value {value} exceeds the representable range [-{limit}, {limit}]")]
    OutOfRange { value: f64, limit: f64 },

    /// Quantization found coefficients that the target grid cannot hold.
    /// `indices` lists the offending coordinates (capped for readability).
    #[error("{count} coefficient(s) exceed the target range [-{limit}, {limit}]; first offenders: {indices:?}")]
    QuantizeRange {
        limit: f64,
        count: usize,
        indices: Vec<u64>,
    },

    /// A serialized model is corrupt or truncated. `offset` is the byte
    /// position where decoding failed.
    #[error("malformed model data at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    /// A serialized model has a version this build does not understand.
    #[error("unsupported model version {found} (this build reads version {supported})")]
    Version { found: u16, supported: u16 },

    /// A text example line failed to parse. `column` is 1-based.
    #[error("parse error at column {column}: {kind}")]
    Parse { column: usize, kind: ParseErrorKind },

    /// An iterative solver did not reach its tolerance.
    #[error("solver did not converge: residual {residual} after {iterations} iterations (tolerance {tolerance})")]
    NoConvergence {
        residual: f64,
        iterations: u64,
        tolerance: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// What exactly went wrong while parsing an example line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty line")]
    EmptyLine,
    #[error("label {0:?} is not one of 0, 1, -1, +1")]
    BadLabel(String),
    #[error("feature term {0:?} is not in index:value form")]
    BadTerm(String),
    #[error("feature index {0:?} is not a positive integer")]
    BadIndex(String),
    #[error("feature value {0:?} is not a finite number")]
    BadValue(String),
}

impl Error {
    /// Convenience constructor for parameter validation failures.
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Convenience constructor for malformed model data.
    pub fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
