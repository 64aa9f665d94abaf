use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix {index} is not a generator matrix: {reason}")]
    NotAGenerator { index: usize, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("non-finite entry in matrix at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular resolvent at lambda = {lambda}")]
    SingularResolvent { lambda: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("matrices do not commute: commutator Frobenius norm {0:e}")]
    NonCommuting(f64),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Whether the failure is numerical (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::SingularResolvent { .. }
                | Error::Range(_)
                | Error::Eigen(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
