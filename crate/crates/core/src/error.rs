use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point outside domain: {0}")]
    OutOfDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible join: {0}")]
    InfeasibleJoin(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing prerequisite certificate: {0}")]
    MissingPrerequisite(String),

    #[error("no admissible profile curve: {check} violated by {violation:e} ({detail})")]
    NoAdmissibleCurve {
        check: String,
        violation: f64,
        detail: String,
    },

    #[error("packing verification failed: {0}")]
    Packing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
