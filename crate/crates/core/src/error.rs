use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Reasons a rate matrix is rejected as a generator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("rate matrix is empty")]
    Empty,
    #[error("rate matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative off-diagonal ({row},{col})")]
    NegativeOffDiagonal { row: usize, col: usize },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    Generator(#[from] GeneratorError),
    #[error("invalid state space: {0}")]
    StateSpace(String),
    #[error("state space mismatch: expected {expected} states, found {found}")]
    SpaceMismatch { expected: usize, found: usize },
    #[error("invalid `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("family has no level n = {0}")]
    UnknownLevel(usize),
    #[error("resolvent solver did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular linear system")]
    Singular,
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::arg(name, format!("must be finite and >= 0, got {value}")))
    }
}
