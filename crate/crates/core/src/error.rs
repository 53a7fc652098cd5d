use thiserror::Error;

use crate::geometry::{Pair, Triad};

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: K = {0}, need at least 3 items")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("incomplete comparison graph: pair {0} has no observations")]
    Incomplete(Pair),

    #[error("duplicate triad {0} in model")]
    DuplicateTriad(Triad),

    #[error("repeated item {0} in cycle")]
    RepeatedItem(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("saturated model, test undefined (residual degrees of freedom = {0})")]
    Saturated(i64),

    #[error("enumeration budget exceeded: {needed} subsets > budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("no representation with at most {0} triads")]
    NoModelWithinSize(usize),

    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("analysis refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
