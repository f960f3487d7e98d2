use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value that fails validation; `path` is a JSON-pointer-like field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An operation was called before its inputs were ready.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The estimated MTD curve has no point inside the unit square.
    #[error("empty MTD curve: {0}")]
    EmptyCurve(String),

    /// Scenario construction could not meet its targets.
    #[error("scenario construction failed: {message} (residual {residual:.3e})")]
    Construction { message: String, residual: f64 },

    /// A live-trial command that contradicts the recorded history.
    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
