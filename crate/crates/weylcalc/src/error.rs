use thiserror::Error;

/// Errors surfaced by construction and evaluation routines.
///
/// Numerical preconditions (symmetry, nonnegativity, symplecticity) are
/// checked against explicit tolerances; truncation-budget violations are
/// refused rather than silently degraded.
#[derive(Debug, Error)]
pub enum WeylError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not symmetric: residual {residual:.3e} exceeds {tol:.3e}")]
    NotSymmetric { residual: f64, tol: f64 },

    #[error("form not nonnegative: eigenvalue {eigenvalue:.3e} below -{tol:.3e}")]
    NotNonnegative { eigenvalue: f64, tol: f64 },

    #[error("map not symplectic: residual {residual:.3e} exceeds {tol:.3e}")]
    NotSymplectic { residual: f64, tol: f64 },

    #[error("operator not skew-symmetric for the given inner product: residual {0:.3e}")]
    NotSkew(f64),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("truncation error estimate {estimate:.3e} exceeds ceiling {ceiling:.3e}")]
    TruncationBudget { estimate: f64, ceiling: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureDiverged(String),

    #[error("dimension ceiling exceeded: requested {requested}, ceiling {ceiling}")]
    CeilingExceeded { requested: usize, ceiling: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, WeylError>;
