//! Error types shared across the crate.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("monomial violates conservation: {0}")]
    Conservation(String),

    #[error("small divisor |omega.(alpha-beta)| = {divisor:.3e} below floor {floor:.3e} at {monomial}")]
    SmallDivisor {
        monomial: String,
        divisor: f64,
        floor: f64,
    },

    #[error("kernel monomial {0} is not invertible by the Lie derivative")]
    KernelMonomial(String),

    #[error("normal-variable degree {found} exceeds 2 at {monomial} (quadratic restriction)")]
    NormalDegree { monomial: String, found: usize },

    #[error("iteration diverged: {0}")]
    Divergence(String),

    #[error("operator is not a contraction: {0}")]
    NonContraction(String),

    #[error("combinatorial guard: estimated {estimate} monomials exceeds ceiling {ceiling}")]
    CombinatorialGuard { estimate: u64, ceiling: u64 },

    #[error("integer overflow evaluating {0}")]
    Overflow(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("incompatible samples: {0}")]
    IncompatibleSamples(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
