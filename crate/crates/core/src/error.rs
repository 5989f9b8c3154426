use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("tail mass {tail:.3e} exceeds tolerance {tol:.1e}; increase the cutoff to at least D = {suggested}")]
    CutoffTooSmall { tail: f64, tol: f64, suggested: usize },

    #[error("Kraus operator count {count} exceeds cap {cap}")]
    KrausBlowUp { count: usize, cap: usize },

    #[error("point count {count} exceeds cap {cap}")]
    CapExceeded { count: usize, cap: usize },

    #[error("numerical quality: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for domain and precondition errors, 3 for numerical quality.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CutoffTooSmall { .. } | Error::Numerical(_) | Error::NotPositive(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
