use std::fmt;

use thiserror::Error;

/// Coarse failure classes. The CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Infeasible,
    Divergence,
    Io,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Validation => "validation",
            ErrorClass::Infeasible => "infeasible",
            ErrorClass::Divergence => "divergence",
            ErrorClass::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem is infeasible; irreducible violated rows: {}", .rows.join(", "))]
    Infeasible { rows: Vec<String> },

    #[error("iteration limit reached after {iterations} iterations (residual {residual:.3e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("solver diverged at round {round}: residual {residual:.3e}")]
    Divergence { round: usize, residual: f64 },

    #[error("inconsistent decomposition: {0}")]
    Decomposition(String),

    #[error("stale message: expected round {expected}, got {got} from atom {sender}")]
    StaleMessage { expected: usize, got: usize, sender: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse(_)
            | Error::Validation(_)
            | Error::Dimension(_)
            | Error::Decomposition(_)
            | Error::StaleMessage { .. } => ErrorClass::Validation,
            Error::Infeasible { .. } => ErrorClass::Infeasible,
            Error::IterationLimit { .. } | Error::Divergence { .. } => ErrorClass::Divergence,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
