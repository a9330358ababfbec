use thiserror::Error;

/// Errors produced by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("negative density at cell {index} (value {value:e})")]
    NegativeDensity { index: usize, value: f64 },

    #[error("zero total mass")]
    ZeroMass,

    #[error("time step {dt:e} exceeds stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("quantiles are not strictly increasing at index {index}")]
    NotStrictlyIncreasing { index: usize },

    #[error("inner solver did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: Vec<f64>,
        best_objective: f64,
    },

    #[error("reference density vanishes at index {index} where the density is positive")]
    NotAbsolutelyContinuous { index: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no blow-up in trajectory")]
    NoBlowup,

    #[error("time {t} is not before the singular time {singular}")]
    PastSingularity { t: f64, singular: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("non-monotone series at index {index}")]
    NonMonotone { index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
