use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("depth {0} is outside the supported range 2..=16")]
    InvalidDepth(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} must be positive, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("coordinate product must be positive, got {0}")]
    UnsupportedSign(f64),
    #[error("depth mismatch: {0} vs {1}")]
    DepthMismatch(usize, usize),
    #[error("entry {index} is not positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("iteration left the admissible region at step {step} (value {value})")]
    Diverged { step: usize, value: f64 },
    #[error("{what} did not converge; best estimate {best}")]
    NotConverged { what: &'static str, best: f64 },
    #[error("invalid initialization: {0}")]
    InvalidInitialization(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
