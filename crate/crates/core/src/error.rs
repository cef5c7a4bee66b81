use thiserror::Error;

/// Errors raised by the hedging library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("scenario weight {weight} at index {index} is not strictly positive")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("scenario weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("empty scenario space")]
    EmptySpace,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("level {0} is outside the open interval (0, 1)")]
    LevelOutOfRange(f64),

    #[error("measure is not a probability measure (total mass {mass})")]
    NotProbability { mass: f64 },

    #[error("measure density is negative or non-finite at scenario {index}")]
    NotNonnegative { index: usize },

    #[error("value at risk is not convex; duality and hedging operations require a convex risk measure")]
    NonConvexMeasure,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hedge weights violate the constraint set by {violation}")]
    Infeasible { violation: f64 },

    #[error("covariance matrix is not symmetric positive definite")]
    SingularCovariance,

    #[error("hedging problem is unbounded below (objective reached {value})")]
    Unbounded { value: f64 },

    #[error("no equivalent martingale measure exists")]
    NoEmm,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
