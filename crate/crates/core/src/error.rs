use thiserror::Error;

use crate::numerics::ode::IntegrationFailure;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller violated a documented precondition (orders, sizes, signs).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A velocity (or other denominator) vanished where the formulas divide by it.
    #[error("singularity: {0}")]
    Singular(String),

    #[error("no sign change of f - target on [{lo}, {hi}] (f(lo) - target = {flo}, f(hi) - target = {fhi})")]
    Bracket { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("integration failed: {0}")]
    Integration(Box<IntegrationFailure>),

    /// Random sampling produced a rank-deficient system.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// The sampled linear system admits no consistent solution.
    #[error("coefficient determination failed: {0}")]
    Determination(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<IntegrationFailure> for Error {
    fn from(f: IntegrationFailure) -> Self {
        Error::Integration(Box::new(f))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
