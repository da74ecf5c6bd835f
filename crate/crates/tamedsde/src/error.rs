//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input must be finite, got {0}")]
    NonFiniteInput(f64),

    #[error("breakpoint index {index} out of range (problem has {k} breakpoints)")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("breakpoints must be strictly increasing")]
    UnorderedBreakpoints,

    #[error("diffusion vanishes at breakpoint xi = {xi}")]
    DegenerateDiffusion { xi: f64 },

    #[error("{name} must be a power of two >= 2, got {value}")]
    NotPowerOfTwo { name: &'static str, value: usize },

    #[error("step count {coarse} does not divide the reference grid size {fine}")]
    DivisibilityViolation { coarse: usize, fine: usize },

    #[error("array length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("divergent paths exceed 1% at level n = {level}: {count} of {paths}")]
    ExcessiveDivergence { level: usize, count: usize, paths: usize },

    #[error("unknown preset '{name}'; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON config: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
