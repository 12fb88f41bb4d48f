use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("truncation error estimate {bound:e} exceeds budget {budget:e}: {what}")]
    Truncation { bound: f64, budget: f64, what: String },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("monotonicity lost: {0}")]
    Monotonicity(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Invariant-style failures, as opposed to numerical breakdowns.
    pub fn is_invariant_failure(&self) -> bool {
        matches!(self, Error::Monotonicity(_) | Error::Inconclusive(_) | Error::Data(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
