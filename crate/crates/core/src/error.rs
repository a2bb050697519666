use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown builtin category `{0}`")]
    UnknownBuiltin(String),
    #[error("ill-conditioned eigenproblem: {0}")]
    IllConditioned(String),
    #[error("gauge error: {0}")]
    Gauge(String),
    #[error("inadmissible diagram operation: {0}")]
    Inadmissible(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("basis size {estimate} exceeds cap {cap}")]
    Cap { estimate: f64, cap: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
