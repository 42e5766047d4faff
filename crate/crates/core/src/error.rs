//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("degree {name} = {value} outside the admissible interval (-1, {upper}) for n = {n}")]
    DegreeRange {
        name: &'static str,
        value: f64,
        upper: f64,
        n: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("hypothesis failure at sample {sample:?} ({region}): {detail}")]
    Hypothesis {
        region: String,
        sample: Vec<f64>,
        detail: String,
    },

    #[error("no finite constant found at this resolution (c exceeded {c_max})")]
    NoFiniteConstant { c_max: f64 },

    #[error("{stage} synthesis failed at level {level}: {source}")]
    Synthesis {
        stage: &'static str,
        level: usize,
        source: Box<Error>,
    },

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("{form}-form selection failed: no passing L on the grid ({tested} rungs tested: {frontier})")]
    Selection { form: String, tested: usize, frontier: String },
}
