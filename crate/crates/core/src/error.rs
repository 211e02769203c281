use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("candidate budget too small: {0}")]
    Budget(String),

    #[error("quadrature did not converge: {0}")]
    Convergence(String),

    #[error("spectrum covers degrees 0..={available}, but degree {requested} was requested")]
    SpectrumRange { requested: usize, available: usize },

    #[error("range error: {0}")]
    Range(String),

    #[error("kernel matrix factorization failed: {0}")]
    Factorization(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("index {index} out of range for {len} members")]
    Index { index: usize, len: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
