use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("unsupported Gauss order {0} (expected 2, 4 or 6)")]
    UnsupportedOrder(usize),

    #[error("unknown tableau `{0}`")]
    UnknownTableau(String),

    #[error("stage matrix numerically singular at spectral mode {mode} (condition estimate {condition:e})")]
    SingularStageMatrix { mode: usize, condition: f64 },

    #[error("stage iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("stage iteration diverged at iteration {iteration} (residual {residual:e})")]
    Blowup { iteration: usize, residual: f64 },

    #[error("order estimate needs at least 3 refinement levels, got {0}")]
    InsufficientLevels(usize),

    #[error("refinement runs end at different times ({expected} vs {found})")]
    FinalTimeMismatch { expected: f64, found: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
