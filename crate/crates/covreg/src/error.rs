use thiserror::Error;

/// Errors surfaced by model construction, fitting and inference.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not positive definite (Cholesky failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("rank-deficient design: {block}")]
    RankDeficient { block: &'static str },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("insufficient data: need at least {required} rows, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: String, got: String) -> Error {
    Error::DimensionMismatch {
        context,
        expected,
        got,
    }
}
