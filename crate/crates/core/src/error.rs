use thiserror::Error;

/// Errors raised by operator algebra, frame construction, and the tomography
/// pipeline. Numerical diagnostics are carried as `f64` regardless of the
/// working scalar type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factor index {index} out of range for {count} tensor factors")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("operator is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("basis vectors are not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("Gram matrix is rank deficient (rank {rank} of {size})")]
    SingularGram { rank: usize, size: usize },

    #[error("operator is not in the frame span (residual {residual:.3e})")]
    NotInSpan { residual: f64 },

    #[error("frame is not a POVM: {0}")]
    NotAPovm(String),

    #[error("not a valid quantum instrument: {0}")]
    NotAnInstrument(String),

    #[error("frame is not informationally complete")]
    NotInformationallyComplete,

    #[error("operation requires qubit factors, found dimension {0}")]
    NotQubit(usize),

    #[error("variant {0} is not supported by this operation")]
    UnsupportedVariant(&'static str),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<V> = std::result::Result<V, Error>;
