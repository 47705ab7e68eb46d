use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("domain lengths must be positive, got {0}")]
    NonpositiveLength(f64),
    #[error("need at least 3 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("field has {got} values but grid has {expected} cells")]
    SizeMismatch { got: usize, expected: usize },
    #[error("field value at cell {0} is not finite")]
    NonFiniteValue(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model parameters fail the balance conditions: {0}")]
    BalanceViolation(String),
    #[error("negative input: {0}")]
    NegativeInput(String),
    #[error("linear solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverNoConvergence { residual: f64, iterations: usize },
    #[error("time step {dt:.3e} exceeds stable limit {limit:.3e}")]
    UnstableTimeStep { dt: f64, limit: f64 },
    #[error("non-finite state detected at t = {time}: {detail}")]
    NonFiniteState { time: f64, detail: String },
    #[error("trajectory needs at least {min} snapshots, got {got}")]
    TooFewSnapshots { min: usize, got: usize },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
