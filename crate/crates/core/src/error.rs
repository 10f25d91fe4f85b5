use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed snapshot JSON: {0}")]
    Decode(#[from] serde_json::Error),

    #[error("snapshot schema violation: {0}")]
    Schema(String),

    #[error("snapshot has no basic blocks")]
    EmptyCfg,

    #[error("binary has {count} functions, more than the supported {limit}")]
    TooManyFunctions { count: usize, limit: usize },

    #[error("malformed string score file: {0}")]
    OverrideFormat(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed label file: {0}")]
    Labels(String),

    #[error("malformed feature file {path}: {reason}")]
    FeatureFile { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
