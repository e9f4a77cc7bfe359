//! Error types shared across the library.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, DvqError>;

/// Errors produced by series handling, model fitting and forecasting.
#[derive(Debug, Error)]
pub enum DvqError {
    /// A parameter or argument combination is invalid.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two collections that must agree in length or dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Not enough usable data to carry out the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A returns transform hit a zero denominator at the given position
    /// (1-based, as reported to users).
    #[error("division by zero: series value at position {position} is zero")]
    DivisionByZero { position: usize },

    /// An inverse transform ran into a missing value it cannot bridge
    /// (1-based position of the offending entry).
    #[error("cannot invert across missing value at position {position}")]
    GapBoundary { position: usize },

    /// An operation that must produce at least one element produced none.
    #[error("empty result: {0}")]
    EmptyResult(String),

    /// All pairwise distances are zero; no radius grid can be built.
    #[error("zero spread: {0}")]
    ZeroSpread(String),

    /// Random gap placement could not find a non-overlapping layout.
    #[error("gap placement failed: {0}")]
    Placement(String),

    /// A gap cannot be filled from the surrounding context.
    #[error("gap cannot be filled: {0}")]
    Unfillable(String),

    /// A name looked up in a registry is not known.
    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    /// A serialized model or report could not be understood.
    #[error("model format error: {0}")]
    ModelFormat(String),

    /// Failure reading or writing a file.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A value in an input file could not be parsed.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl DvqError {
    /// Whether the error stems from invalid input (files, flags, parameters)
    /// rather than from a computation that failed on valid input. Callers
    /// such as the CLI use this to pick distinct exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            DvqError::InvalidInput(_)
                | DvqError::DimensionMismatch(_)
                | DvqError::InsufficientData(_)
                | DvqError::UnknownName { .. }
                | DvqError::ModelFormat(_)
                | DvqError::Io { .. }
                | DvqError::Parse { .. }
        )
    }
}
