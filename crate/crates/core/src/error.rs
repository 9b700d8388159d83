use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix pencil (E, A) is not regular")]
    IrregularPencil,

    #[error("descriptor simulation needs {needed} input samples to cover the non-causal window, got {got}")]
    InsufficientFutureInputs { needed: usize, got: usize },

    #[error("signal of length {len} is too short for Hankel depth {depth}")]
    TooShort { len: usize, depth: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("inconsistent disturbance expansion dimension: step {step} has p_w = {got}, expected {expected}")]
    NonUniformNoise {
        step: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("inconsistent disturbance rows (residual {residual:.3e}) for basis index {index}")]
    InconsistentDisturbance { index: usize, residual: f64 },

    #[error("input is not persistently exciting of order {order}: {reason}")]
    NotPersistentlyExciting { order: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
