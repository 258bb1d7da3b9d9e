use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NevError {
    #[error("range error: {0}")]
    Range(String),
    #[error("pole error: {0}")]
    Pole(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-reduced representation at z = {0}")]
    NonReduced(String),
    #[error("singular point: {0}")]
    Singular(String),
    #[error("counting error: {0}")]
    Counting(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, NevError>;
