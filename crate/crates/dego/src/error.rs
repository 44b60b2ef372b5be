use thiserror::Error;

/// Errors surfaced by surrogate construction, optimization, and the
/// benchmark front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (jitter cap {cap:.3e} reached)")]
    NotPositiveDefinite { cap: f64 },

    #[error("all candidate evaluations returned non-finite values")]
    AllEvaluationsInvalid,

    #[error("surrogate training failed: {0}")]
    TrainingFailed(String),

    #[error("configuration error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
