use thiserror::Error;

#[derive(Debug, Error)]
pub enum FsiError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("phase mismatch: {0}")]
    Phase(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("linear solver: {0}")]
    Linear(String),
    #[error("nonlinear solver: {0}")]
    Newton(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("loss of injectivity: min det = {min_det:e}")]
    Injectivity { min_det: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: String, reason: String },
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("duplicate key `{key}` (lines {first} and {second})")]
    DuplicateKey {
        key: String,
        first: usize,
        second: usize,
    },
    #[error("{0}")]
    Experiment(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FsiError>;
