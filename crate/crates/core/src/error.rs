use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0:?} lies outside the chart domain")]
    Domain(Vec<f64>),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("trajectory escaped the momentum bound |p| <= {bound}")]
    Escape { bound: f64 },
    #[error("frame construction failed: {0}")]
    Frame(String),
    #[error("fiber convexity violated: {0}")]
    Convexity(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("sampling resolution insufficient: {0}")]
    Resolution(String),
    #[error("inconsistent Legendre pair: {0}")]
    InconsistentPair(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("boundary operator does not square to zero: {0}")]
    BoundarySquare(String),
    #[error("indeterminate numerical rank: {0}")]
    Indeterminate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown reference system `{0}`")]
    UnknownSystem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
