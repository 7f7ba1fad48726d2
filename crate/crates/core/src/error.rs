use alloc::string::String;

/// Failures raised by the solvers and model constructors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{argument} = {value} is out of domain: {reason}")]
    Domain {
        argument: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singularity at p = {price}: {reason}")]
    Singularity { price: f64, reason: &'static str },
    #[error("no convergence in {method} after {iterations} iterations: {detail}")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn domain(argument: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            argument,
            value,
            reason,
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Singularity { .. } | Error::NoConvergence { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;
