use thiserror::Error;

/// Errors produced by estimation, inference and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate sample: need at least two distinct values")]
    DegenerateSample,

    #[error("point {value} lies outside the interval [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular design: the penalized normal equations are not positive definite")]
    SingularDesign,

    #[error("initialization failed: every candidate direction produced a singular fit")]
    Initialization,

    #[error("degenerate sphere path: denominator {0:e} too small")]
    PathDegenerate(f64),

    #[error("bootstrap instability: {dropped} of {total} replicates failed")]
    BootstrapInstability { dropped: usize, total: usize },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
