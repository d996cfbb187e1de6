use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid record: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown relation {name:?}")]
    UnknownRelation {
        path: PathBuf,
        line: usize,
        name: String,
    },

    #[error("relation vocabulary: {0}")]
    Vocabulary(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty bag: {0}")]
    EmptyBag(&'static str),

    #[error("empty batch")]
    EmptyBatch,

    #[error("gold set is empty")]
    EmptyGold,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("anchor index {path}: {message}")]
    Index { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
