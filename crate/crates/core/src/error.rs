use thiserror::Error;

/// Errors produced by the estimation and testing routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular (pivot {pivot} of {size})")]
    SingularMatrix { pivot: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("first column of the regression design must be all ones")]
    MissingIntercept,

    #[error("need (r+1)+(p+1) < n, got n = {n}, p = {p}, r = {r}")]
    TooFewObservations { n: usize, p: usize, r: usize },

    #[error("heteroscedasticity regressor column {column} is constant")]
    ConstantColumn { column: usize },

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("scedastic variance is not positive at row {row}")]
    NonPositiveVariance { row: usize },

    #[error("estimation did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("fit is degenerate: residuals vanish (exact interpolation)")]
    DegenerateFit,

    #[error("no root of the variance equation could be bracketed")]
    NoRoot,

    #[error("fit has not converged; refusing to compute a test statistic")]
    NotConverged,

    #[error("estimating equation 1'v = {0:e} is not satisfied")]
    NotOnNull(f64),

    #[error("score vector has zero variance")]
    ZeroVariance,

    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
}

impl Error {
    /// True for failures of the numerical procedures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateFit
                | Error::NoRoot
                | Error::NotConverged
                | Error::NotOnNull(_)
                | Error::ZeroVariance
                | Error::TooManyFailures { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
