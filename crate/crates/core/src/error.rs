use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain type was constructed with a violated invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A feature view whose pairwise dispersion is zero cannot be turned
    /// into a heat kernel.
    #[error("degenerate view {view}: {reason}")]
    DegenerateView { view: usize, reason: &'static str },

    #[error("{0}")]
    Metric(String),

    /// Non-finite objective or factor during optimization.
    #[error("numerical failure at iteration {iteration}: {reason}")]
    Numerical { iteration: usize, reason: String },

    #[error("{file}:{line}: {reason}")]
    Parse {
        file: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error originates in the input data rather than the
    /// optimizer or the caller's configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. }
                | Error::Shape(_)
                | Error::DegenerateView { .. }
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Metric(_)
        )
    }
}
