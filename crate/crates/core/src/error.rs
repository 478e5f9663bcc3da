use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The quantity is undefined for this input (constant array, zero vector).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}:{line}: schema error: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },

    #[error("no embedding for text {0:?}")]
    MissingEmbedding(String),

    #[error("class {0:?} has no members")]
    EmptyClass(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("generation failed after {retries} retries: {msg}")]
    Generation { retries: u32, msg: String },

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("combinatorial budget exceeded: {0}")]
    Budget(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
