use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model file line {line}: {source}")]
    ExprSyntax {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("model file line {line}: {message}")]
    ModelSyntax { line: usize, message: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("f[{row}] does not vanish at the origin (f(0) = {value:e})")]
    NotZeroAtOrigin { row: usize, value: f64 },
    #[error("{function} is singular at x = {x:?}: {source}")]
    SingularPoint {
        function: String,
        x: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("need at least {needed} samples for the regression basis, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("cannot select {requested} scheduling variables: {reason}")]
    Selection { requested: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported model schema `{found}` (expected `{expected}`)")]
    Schema { found: String, expected: String },
    #[error("block {block} has shape {found}, expected {expected}")]
    Shape {
        block: String,
        found: String,
        expected: String,
    },
    #[error("corrupted model file: {0}")]
    Corrupted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
