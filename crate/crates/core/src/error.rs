use thiserror::Error;

use crate::instance::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bid must be a nonnegative number, got {0}")]
    NegativeBid(f64),

    #[error("multiplier lambda[{index}] = {value} is outside [0, 1]")]
    LambdaOutOfBox { index: usize, value: f64 },

    #[error("multiplier vector has length {got}, expected {expected}")]
    LambdaLength { got: usize, expected: usize },

    #[error("invalid instance:\n{0}")]
    InvalidInstance(ValidationReport),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("linear program: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
