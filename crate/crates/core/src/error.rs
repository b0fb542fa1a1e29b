use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: self-loop on node {node} (graph must be simple)")]
    SelfLoop { line: usize, node: usize },

    #[error("input contains no edges")]
    EmptyInput,

    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(usize),

    #[error("node index {index} out of range for graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector is constant; correlation is undefined")]
    ConstantVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("Newton iteration did not converge in {iterations} iterations (|u| = {score_norm:e}); classes are likely separated by x")]
    NoConvergence { iterations: usize, score_norm: f64 },

    #[error("classes are (quasi-)completely separated by x; the classifier fit does not exist")]
    Separated,

    #[error("node {0} was never included in any Monte-Carlo replicate; its weight is unusable")]
    UnusableWeight(usize),

    #[error("variance needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
