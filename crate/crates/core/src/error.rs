use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ground space needs at least one site")]
    EmptySpace,

    #[error("weight {value} at site {site} is not a positive finite real")]
    InvalidWeight { site: usize, value: f64 },

    #[error("site {site} out of range for a space with {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("invalid site set: {0}")]
    InvalidSet(String),

    #[error("configuration has {got} sites, space has {expected}")]
    Shape { expected: usize, got: usize },

    #[error("no point at site {site} to drop")]
    PointAbsent { site: usize },

    #[error("invalid truncation request: {0}")]
    InvalidTruncation(String),

    #[error("state space needs {required} states, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(u64),

    #[error("non-finite value {value} at configuration {counts:?}")]
    NonFinite { value: f64, counts: Vec<u32> },

    #[error("boundary leak {leak:e} exceeds limit {limit:e}")]
    BoundaryLeak { leak: f64, limit: f64 },

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid binding: {0}")]
    Binding(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
