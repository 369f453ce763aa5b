use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid type: {0}")]
    InvalidType(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("weight {value:e} at index {index} is negative beyond round-off")]
    NegativeWeight { index: usize, value: f64 },
    #[error("measures live on different site sets")]
    IncompatibleSupports,
    #[error("product factors must be disjoint and cover the site set: {0}")]
    InvalidPartitionFactors(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not a block of the labelled partition")]
    InvalidBlock,
    #[error("labelled partition is not an interval partition around the active site")]
    NotIntervalPartition,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("site ordering is not non-decreasing in the site order: {0}")]
    NotMonotoneOrdering(String),
    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),
    #[error("quadrature did not converge: error estimate {estimate:e} at grid {grid}")]
    QuadratureError { estimate: f64, grid: usize },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StiffnessError { t: f64, h: f64 },
    #[error("matrix exponential overflows (t*|A| = {norm:e}); split the time interval")]
    ExpOverflow { norm: f64 },
    #[error("operator has negative entries; the series route needs a nonnegative matrix")]
    NegativeOperator,
    #[error("Yule line count exceeded the cap of {cap}")]
    YuleOverflow { cap: u64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("leaf of line {line} has no type on its ancestral set")]
    IncompleteLeaves { line: usize },
    #[error("at \"{pointer}\": {message}")]
    Parse { pointer: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
