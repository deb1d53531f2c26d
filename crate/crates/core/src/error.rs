use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "circulant embedding has a negative eigenvalue {min_eigenvalue:e} at size {size} after {doublings} doublings"
    )]
    EmbeddingFailure {
        size: usize,
        doublings: usize,
        min_eigenvalue: f64,
    },

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("grid of {len} points exceeds the Cholesky cap of {cap}")]
    SizeCap { len: usize, cap: usize },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("step schedule invalid: {0}")]
    ScheduleInvalid(String),

    #[error("quadrature did not converge: relative change {rel_change:e}")]
    QuadratureNotConverged { rel_change: f64 },

    #[error("quadrature unstable under node doubling: relative change {rel_change:e}")]
    QuadratureUnstable { rel_change: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transport instance too large: {size} cells (cap {cap})")]
    TooLarge { size: usize, cap: usize },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) | Error::Json(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
