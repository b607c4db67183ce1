use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("log of non-positive value at node {node}")]
    LogDomain { node: usize },

    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { op: &'static str, node: usize },

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error("input `{0}` is not bound")]
    Unbound(String),

    #[error("graph has no input named `{0}`")]
    UnknownInput(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("observation out of range: {0}")]
    Observation(String),

    #[error("singular linear system")]
    Singular,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
