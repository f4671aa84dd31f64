//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, sampling, solving and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter left its mathematical domain (e.g. alpha outside (0,2)).
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// A configuration key failed validation.
    #[error("config error: key `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    /// Escape/target geometry is inconsistent (e.g. target strip overlaps the region).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A point was mapped outside the region it must lie in.
    #[error("point ({v}, {w}) is outside the region")]
    OutOfRegion { v: f64, w: f64 },

    /// Newton iteration did not reach the requested residual.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Closed-form nullcline solve hit a pole.
    #[error("singular nullcline solve: {0}")]
    Singular(String),

    /// The iterative linear solver exhausted its iteration cap.
    #[error("linear solve failed after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },

    /// A solution field violated its sign/bound contract beyond tolerance slack.
    #[error("solution violates its contract: {0}")]
    NonFiniteSolution(String),

    /// Too few samples for a tail estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Monte Carlo censoring exceeded the configured limit.
    #[error("horizon too short: censored fraction {censored:.4} exceeds limit {limit:.4}")]
    HorizonTooShort { censored: f64, limit: f64 },

    /// A requested combination is deliberately not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(key: &str, constraint: &str) -> Self {
        Error::Config {
            key: key.to_string(),
            constraint: constraint.to_string(),
        }
    }

    /// Process exit code classification used by the command-line front end:
    /// 1 config, 2 numerical contract, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) | Error::OutOfDomain(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
