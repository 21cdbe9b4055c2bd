use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A non-finite value appeared where finite numbers are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The API was driven in an unsupported way (e.g. backward on an untaped graph).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("complex eigenvalues: {re} ± {im}i")]
    ComplexEigenvalues { re: f64, im: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("corrupt parameter container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by the caller's inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Singular(_) | Error::ComplexEigenvalues { .. }
        )
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
