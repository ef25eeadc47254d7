use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive definite (a = {a}, a + b = {})", a + b)]
    NonPositiveDefinite { a: f64, b: f64 },

    #[error("spike direction has zero norm while the spike coefficient is nonzero")]
    ZeroSpike,

    #[error("input vector has zero norm")]
    ZeroVector,

    #[error("feature vector has zero norm")]
    ZeroFeature,

    #[error("link has vanishing first Hermite coefficient (mu1 = {0:e})")]
    DegenerateLink(f64),

    #[error("quadrature produced a non-finite value")]
    QuadratureFailure,

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("eigensolver did not converge")]
    ConvergenceFailure,

    #[error("spectral gap collapsed: lambda_tilde = {lambda_tilde:e} <= A * lambda2 = {floor:e}")]
    GapCollapse { lambda_tilde: f64, floor: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
