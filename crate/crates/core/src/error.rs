use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid adjacency sequence: {0}")]
    InvalidSequence(String),

    #[error("graph has {nodes} nodes but the width is {width}")]
    WidthExceeded { nodes: usize, width: usize },

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("loss mask selects no positions")]
    EmptyMask,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
