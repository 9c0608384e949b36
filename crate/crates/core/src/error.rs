use thiserror::Error;

pub type Result<T> = std::result::Result<T, BiaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BiaError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("receiver {k} is not a member of group {n}")]
    Membership { n: usize, k: usize },

    /// Decoder preconditions failed. `ranks` holds one entry per family member,
    /// `union_rank` is the rank of the concatenated family.
    #[error("alignment violation: {detail} (ranks {ranks:?}, union rank {union_rank})")]
    AlignmentViolation {
        detail: String,
        ranks: Vec<usize>,
        union_rank: usize,
    },

    #[error("scheme too large: {slots} slots exceeds limit {limit}")]
    Size { slots: u128, limit: u128 },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("decoding error: {0}")]
    Decoding(String),

    #[error("shuffle error: {0}")]
    Shuffle(String),

    #[error("reduce output mismatch at node {node} (first differing IVA from file {file})")]
    Correctness { node: usize, file: usize },

    #[error("invalid run: {0}")]
    InvalidRun(String),
}

impl BiaError {
    pub fn param(msg: impl Into<String>) -> Self {
        BiaError::Parameter(msg.into())
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            BiaError::Parameter(_) => "parameter",
            BiaError::Membership { .. } => "membership",
            BiaError::AlignmentViolation { .. } => "alignment_violation",
            BiaError::Size { .. } => "size",
            BiaError::Encoding(_) => "encoding",
            BiaError::Decoding(_) => "decoding",
            BiaError::Shuffle(_) => "shuffle",
            BiaError::Correctness { .. } => "correctness",
            BiaError::InvalidRun(_) => "invalid_run",
        }
    }
}
