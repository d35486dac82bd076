use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular matrix")]
    SingularMatrix,
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("no trajectory contributed to the estimator ({0})")]
    EmptyEnsemble(String),
    #[error("DVR levels not converged under grid refinement: coarse {coarse:?}, fine {fine:?}")]
    DvrNotConverged {
        coarse: alloc::vec::Vec<f64>,
        fine: alloc::vec::Vec<f64>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
