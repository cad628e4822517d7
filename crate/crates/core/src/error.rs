use std::path::PathBuf;

use thiserror::Error;

use crate::graph::Key;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cheirality violation: point depth {depth:.3e} m is not in front of the camera{}", context_suffix(.context))]
    CheiralityViolation { depth: f64, context: Option<String> },

    #[error("invalid inverse depth {0}: must be > 0")]
    InvalidInverseDepth(f64),

    #[error("unknown variable {0}")]
    UnknownVariable(Key),

    #[error("singular system: normal equations are rank deficient ({0})")]
    SingularSystem(String),

    #[error("matrix is not positive definite (pivot {pivot}, value {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension {dim} exceeds the dense limit {max_dim}")]
    DimensionTooLarge { dim: usize, max_dim: usize },

    #[error("{}:{line}: {message}", .path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse { path: Option<PathBuf>, line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(c: &Option<String>) -> String {
    c.as_ref().map(|c| format!(" ({c})")).unwrap_or_default()
}

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::DegenerateScenario(_) => 3,
            Error::CheiralityViolation { .. }
            | Error::InvalidInverseDepth(_)
            | Error::SingularSystem(_)
            | Error::NotPositiveDefinite { .. }
            | Error::DimensionTooLarge { .. }
            | Error::UnknownVariable(_) => 4,
            Error::Io { .. } => 5,
        }
    }

    pub(crate) fn with_context(self, ctx: impl FnOnce() -> String) -> Self {
        match self {
            Error::CheiralityViolation { depth, context: None } => {
                Error::CheiralityViolation { depth, context: Some(ctx()) }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
