use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid membrane pair: {0}")]
    InvalidPair(String),

    #[error("nonpositive gap {gap:e} at node {index}")]
    NonpositiveGap { index: usize, gap: f64 },

    #[error("point ({x}, {z}) lies outside the closed domain")]
    OutsideDomain { x: f64, z: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular linear system (zero pivot in column {0})")]
    Singular(usize),

    #[error("linear solve stalled at relative residual {achieved:e} (tolerance {tol:e})")]
    ToleranceNotReached { achieved: f64, tol: f64 },

    #[error("no small-gap solution found: {0}")]
    NoSolutionFound(String),

    #[error("touchdown (w = -1) at x = {x}")]
    Touchdown { x: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
