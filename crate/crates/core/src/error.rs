use std::path::PathBuf;

use crate::dual::SubproblemSolution;
use crate::sca::SolveTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("ill-conditioned matrix in {context} (condition estimate {condition:.3e})")]
    Conditioning { context: String, condition: f64 },

    #[error("inner solver did not converge within {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last: Box<SubproblemSolution>,
    },

    #[error("outer iteration {iteration} failed: {source}")]
    Outer {
        iteration: usize,
        trace: SolveTrace,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at byte {offset} ({field}): {message}")]
    Parse {
        offset: usize,
        field: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidInput(_) => "invalid_input",
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::Conditioning { .. } => "conditioning",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Outer { .. } => "outer_failure",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Refused(_) => "refused",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
