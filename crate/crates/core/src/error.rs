use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("{what} did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("Picard iteration is not contracting on window starting at t={t0}: factor {factor}")]
    NotContracting { t0: f64, factor: f64 },
    #[error("optimizer stagnated: {0}")]
    Stagnation(String),
    #[error("invalid audit input: {0}")]
    AuditInput(String),
    #[error("rate curve is not monotone: I({d_hi}) = {i_hi} < I({d_lo}) = {i_lo}")]
    NonMonotone {
        d_lo: f64,
        i_lo: f64,
        d_hi: f64,
        i_hi: f64,
    },
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
