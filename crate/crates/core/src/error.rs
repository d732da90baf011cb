use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("level {0} is not squarefree")]
    NotSquarefree(u64),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("conductor mismatch: {0}")]
    ConductorMismatch(String),
    #[error("need {needed} Fourier coefficients, only {available} available")]
    InsufficientCoefficients { needed: usize, available: usize },
    #[error("truncation below certified floor: Im z = {im} < {floor}")]
    BelowFloor { im: f64, floor: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
