use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("attribute `{attribute}` has conflicting value types {first} and {second}")]
    TypeConflict {
        attribute: String,
        first: String,
        second: String,
    },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("attribute `{0}` has no usable numeric range")]
    DegenerateRange(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("empty text cannot be encoded")]
    EmptyText,
    #[error("no vector for `{0}` in the external text-encoder table")]
    MissingVector(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at {phase} epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        source: diffcore::DiffError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
