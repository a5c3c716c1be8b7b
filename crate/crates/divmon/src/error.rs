use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] divmon_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("event file has no header row")]
    MissingHeader,
    #[error("missing column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("unexpected column {0:?} in header")]
    UnexpectedColumn(String),
    #[error("row error budget of {budget} exceeded ({errors} bad rows)")]
    ErrorBudgetExceeded { budget: usize, errors: usize },
    #[error("no events")]
    NoEvents,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(
        "snapshot was taken under a different configuration (digest {found}, expected {expected})"
    )]
    ConfigMismatch { expected: String, found: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
