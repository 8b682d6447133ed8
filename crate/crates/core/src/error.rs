use thiserror::Error;

/// Errors raised by the pricing, estimation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// A product's price sensitivity is not positive.
    #[error(
        "price sensitivity {beta} of product {index} is not positive (Assumption 1 requires <x, gamma> >= L0 > 0)"
    )]
    AssumptionViolation { index: usize, beta: f64 },

    #[error("solver did not converge after {iterations} iterations (final residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),
}

pub type Result<T> = std::result::Result<T, PricingError>;
