use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series or iteration ran out of budget before certifying its result.
    #[error(
        "{context}: series did not converge after {terms_used} terms \
         (tail estimate {tail_estimate:.3e}, partial value {partial:.6e})"
    )]
    Convergence {
        context: String,
        terms_used: usize,
        tail_estimate: f64,
        partial: f64,
    },

    /// The truncated Fock space was too small for the requested computation.
    #[error("{context}: truncation breach (measured {measured:.3e}, tolerance {tolerance:.1e})")]
    Truncation {
        context: String,
        measured: f64,
        tolerance: f64,
    },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// One or more validation checks failed.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Convergence { .. } => 3,
            Error::Truncation { .. } => 4,
            Error::Validation(_) => 5,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
