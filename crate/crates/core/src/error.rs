use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("environment is not transient to the right (E[log rho] = {0})")]
    NotTransient(f64),
    #[error("lambda is infinite, no trapping minimum")]
    NotTrapped,
    #[error("empty range: {0}")]
    EmptyRange(String),
    #[error("particle count k={k} is invalid for n={n}")]
    BadK { n: usize, k: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("state space too large: {states} states (limit {limit})")]
    TooLarge { states: u128, limit: usize },
    #[error("window too wide: 4q={four_q} must be < n={n}")]
    WindowTooWide { four_q: usize, n: usize },
    #[error("window of length {len} exceeds the limit {limit}")]
    WindowTooLarge { len: usize, limit: usize },
    #[error("bracket could not close under cap {cap}: {reason}")]
    CapExceeded { cap: f64, reason: String },
    #[error("time cap {cap} reached")]
    Timeout { cap: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
