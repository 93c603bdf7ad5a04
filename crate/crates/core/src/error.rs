use std::fmt;

/// Errors produced by corpus ingestion, tree building and the numerical core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate instance id {0}")]
    DuplicateId(u64),

    #[error("instance {id}: entity {entity} does not align to token boundaries: marked {marked:?} vs tokens {tokens:?}")]
    Alignment {
        id: u64,
        entity: &'static str,
        marked: String,
        tokens: String,
    },

    #[error("instance {0}: no parse found (manifest index {1} out of range)")]
    MissingParse(u64, usize),

    #[error("{kind} tag inventory overflow: adding {tag:?} would exceed capacity {cap}")]
    TagCapacity {
        kind: &'static str,
        tag: String,
        cap: usize,
    },

    #[error("dependency tree: {0}")]
    Tree(TreeError),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index} out of range 1..={n}")]
    IndexRange { index: usize, n: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("embedding file: {0}")]
    Embedding(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("digest mismatch: {0}")]
    DigestMismatch(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("internal: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Structural problems found while validating a dependency tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    NoRoot,
    MultipleRoots(Vec<usize>),
    Cycle(Vec<usize>),
    HeadOutOfRange { index: usize, head: usize, n: usize },
    SelfHead(usize),
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::NoRoot => write!(f, "no root token (no head = 0)"),
            TreeError::MultipleRoots(roots) => write!(f, "multiple roots at {roots:?}"),
            TreeError::Cycle(nodes) => write!(f, "cycle through nodes {nodes:?}"),
            TreeError::HeadOutOfRange { index, head, n } => {
                write!(f, "token {index} has head {head} outside 0..={n}")
            }
            TreeError::SelfHead(i) => write!(f, "token {i} is its own head"),
        }
    }
}

impl From<TreeError> for Error {
    fn from(e: TreeError) -> Self {
        Error::Tree(e)
    }
}

impl Error {
    /// Process exit code class: 3 for data problems, 4 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } | Error::Shape(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
