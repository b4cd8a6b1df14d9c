use thiserror::Error;

/// Errors raised by the tree, bi-tree and Bellman routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a {kind} with {requested} entries exceeds the size limit of {limit}")]
    TooLarge {
        kind: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("node {0} is not a node of this tree")]
    InvalidNode(usize),

    #[error("negative mass {value} at {position}")]
    NegativeMass { position: String, value: f64 },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("mass {value} on interior node {node} of a boundary-only measure")]
    InteriorMass { node: usize, value: f64 },

    #[error("point outside the Bellman domain: {constraint} violated by {excess:e}")]
    Domain {
        constraint: &'static str,
        excess: f64,
    },

    #[error("test constant {measured} at {location} exceeds 1; rescale the measure first")]
    NotNormalized { measured: f64, location: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("sampler exhausted {0} retries without an admissible witness")]
    SamplerExhausted(usize),

    #[error("invalid measure file: {0}")]
    MeasureFile(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
