use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("scaling t = {t} is outside (0, 1/lambda_max) = (0, {limit})")]
    ScalingDomain { t: f64, limit: f64 },

    #[error("hafnian of an odd-sized matrix requested (size {0})")]
    OddSize(usize),

    #[error("multi-index length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0} did not converge")]
    NonConvergence(&'static str),

    #[error("ill-posed instance: |mu| = {mu:e} is negligible against sqrt(V) = {sqrt_v:e}")]
    IllPosed { mu: f64, sqrt_v: f64 },

    #[error(
        "budget exceeded: {pairs} coefficient pairs ({hafnians} distinct hafnians) \
         against a budget of {budget} pairs"
    )]
    BudgetExceeded { pairs: u128, hafnians: u128, budget: u128 },

    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput { field, reason: reason.into() }
    }
}
