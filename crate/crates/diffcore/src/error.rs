use thiserror::Error;

pub type Result<T> = std::result::Result<T, DiffError>;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("{op}: {msg} (shape {shape:?})")]
    InvalidArgument {
        op: &'static str,
        shape: [usize; 2],
        msg: String,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint shape mismatch for `{name}`: store has {expected:?}, file has {found:?}")]
    CheckpointShape {
        name: String,
        expected: [usize; 2],
        found: [usize; 2],
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Json(#[from] serde_json::Error),
}
