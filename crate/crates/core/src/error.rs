use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not Hermitian: asymmetry {asymmetry:.3e} exceeds {limit:.3e}")]
    NotHermitian { asymmetry: f64, limit: f64 },

    #[error("operator is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("not a density operator: {0}")]
    NotDensity(String),

    #[error("quantum channel is not trace preserving: deviation {0:.3e}")]
    NotTracePreserving(f64),

    #[error("conic program is primal infeasible")]
    Infeasible,

    #[error("conic program is unbounded")]
    Unbounded,

    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    #[error("symmetry probe failed: {0}")]
    SymmetryViolation(String),

    #[error("block decomposition failed: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
