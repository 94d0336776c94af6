//! Error type shared by every sketch in the crate.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, SketchError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "update ({index}, {delta}) would drive f[{index}] to {result} in a strict-turnstile stream"
    )]
    StrictViolation { index: u64, delta: i64, result: i64 },

    #[error("update index {index} outside universe of size {n}")]
    IndexOutOfRange { index: u64, n: u64 },

    #[error("update delta must be nonzero with |delta| <= {max}, got {delta}")]
    InvalidDelta { delta: i64, max: u64 },

    #[error("stream spec is infeasible: {0}")]
    Infeasible(String),

    #[error("no prime in [{lo}, {hi}]")]
    EmptyPrimeInterval { lo: u64, hi: u64 },

    #[error("counter exceeded saturation bound {bound}")]
    Saturated { bound: u64 },

    #[error("sketch is in a failed state")]
    Failed,

    #[error("no interval is live in both sketches (f oldest {f_oldest:?}, g oldest {g_oldest:?})")]
    MismatchedIntervals {
        f_oldest: Option<u32>,
        g_oldest: Option<u32>,
    },

    #[error("sketches were built from different shared seeds")]
    SeedMismatch,

    #[error("no live sampling level")]
    NoLiveLevel,

    #[error("row {row} is not retained")]
    MissingRow { row: u32 },

    #[error("row {row} is saturated: every cell is nonzero")]
    SaturatedRow { row: u32 },

    #[error("estimator failed: {0}")]
    EstimatorFailed(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl SketchError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        SketchError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for SketchError {
    fn from(e: std::io::Error) -> Self {
        SketchError::Io(e.to_string())
    }
}
