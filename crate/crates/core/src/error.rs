use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfimError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: max |H - H*| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate family: ||Q||_F = {norm:e}, relative errors are undefined")]
    DegenerateFamily { norm: f64 },

    #[error("zero denominator in {0} norm")]
    ZeroDenominator(&'static str),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("CFIM has weight {weight:e} on the kernel of Q")]
    KernelLeak { weight: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for QfimError {
    fn from(e: std::io::Error) -> Self {
        QfimError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QfimError {
    fn from(e: serde_json::Error) -> Self {
        QfimError::Io(e.to_string())
    }
}

impl From<csv::Error> for QfimError {
    fn from(e: csv::Error) -> Self {
        QfimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QfimError>;
