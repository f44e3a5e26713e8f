use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symmetric eigensolver did not converge")]
    NonConvergence,

    #[error("matrix is not positive semi-definite: min eigenvalue {min_eig:e} < -{tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("Cholesky failed after {attempts} jitter attempts (last jitter {jitter:e})")]
    NotPositiveDefinite { attempts: usize, jitter: f64 },

    #[error("leading covariance block K11 is singular (min eigenvalue {min_eig:e}, threshold {threshold:e})")]
    SingularK11 { min_eig: f64, threshold: f64 },

    #[error("trailing spectrum of A is identically zero; rank(A) <= k")]
    ZeroTail,

    #[error("oversampling p = {p} is below the required minimum {min}")]
    InvalidOversampling { p: usize, min: usize },

    #[error("target rank k = {k} is below the required minimum {min}")]
    InvalidRank { k: usize, min: usize },

    #[error("need at least {min} trials, got {trials}")]
    InvalidTrials { trials: usize, min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("point outside [-1,1]^d or wrong dimension: {0}")]
    OutOfDomain(String),

    #[error("{nodes} quadrature nodes exceed the limit of {max}")]
    TooManyNodes { nodes: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
