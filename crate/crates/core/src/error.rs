use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigendecomposition of a {dim}x{dim} Hermitian matrix did not converge")]
    DecompositionFailure { dim: usize },

    /// `tr(A_i rho)` vanished (or went negative) for dataset entry `index`.
    #[error("singular likelihood at operator {index}: tr(A rho) = {value:e}")]
    SingularLikelihood { index: usize, value: f64 },

    #[error(
        "Newton solve did not converge after {iterations} iterations (decrement {decrement:e})"
    )]
    ConvergenceFailure { iterations: usize, decrement: f64 },

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported dataset version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
