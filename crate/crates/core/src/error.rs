use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("hamiltonian is not Hermitian (max entry deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pulse has zero norm")]
    ZeroPulse,

    #[error("matrix dimension {0} exceeds the supported maximum of {max}", max = crate::numerics::MAX_DIM)]
    DimensionTooLarge(usize),

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (estimate {estimate:e}, error {error:e})"
    )]
    QuadratureNotConverged {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("ODE exceeded {0} steps")]
    TooManySteps(usize),

    #[error("invalid detection record: {0}")]
    InvalidRecord(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("conditional pair has zero weight")]
    ZeroWeight,

    #[error("enumeration would produce {requested} records, budget is {budget}")]
    BudgetExceeded { requested: f64, budget: usize },

    #[error("second-count statistics need an initially excited atom, got rho_ee = {0}")]
    NotExcited(f64),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
