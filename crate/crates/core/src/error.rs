use thiserror::Error;

/// Errors raised while assembling the spectral discretization.
#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("truncation order K must be >= 1, got {0}")]
    InvalidTruncation(usize),
    #[error("elastic parameter alpha must be >= 0, got {0}")]
    NegativeAlpha(f64),
    #[error("grid needs at least 2K+2 = {need} points per direction, got {got}")]
    GridTooCoarse { need: usize, got: usize },
    #[error("field truncation {field} does not match table truncation {table}")]
    TruncationMismatch { field: usize, table: usize },
    #[error("sample buffer holds {got} values, grid expects {need}")]
    SampleShape { need: usize, got: usize },
}

/// Errors raised by the time integrators.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("non-finite coefficient at step {step}")]
    BlowUp { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Raised when an explicit-constant a priori bound fails beyond slack.
#[derive(Debug, Error)]
#[error("estimate `{which}` violated: lhs {lhs} > rhs {rhs}")]
pub struct EstimateViolation {
    pub which: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Errors from the optimization driver.
#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("line search failed after {shrinks} shrinks at iteration {iter}")]
    LineSearchFail { iter: usize, shrinks: usize },
    #[error("invalid optimizer setup: {0}")]
    Setup(String),
}
