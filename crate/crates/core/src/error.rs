use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("zero degree at {what} {index}")]
    ZeroDegree { what: &'static str, index: usize },

    #[error("index {index} out of range for {bound} {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("incidence entry ({row}, {col}) must be positive")]
    InvalidIncidence { row: usize, col: usize },

    #[error("hyperedge weight {0} must be positive and finite")]
    InvalidWeight(usize),

    #[error("adjacency must be symmetric, binary and without self-loops: {0}")]
    InvalidAdjacency(&'static str),

    #[error("hypergraph has no hyperedges")]
    EmptyHypergraph,

    #[error("dimension mismatch in {op}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("segment {0} is empty")]
    EmptySegment(usize),

    #[error("loss must be 1x1, got {0}x{1}")]
    NonScalarLoss(usize, usize),

    #[error("backward already ran on this tape; reset it first")]
    BackwardTwice,

    #[error("class {class} has {available} nodes, {required} required for training")]
    SplitInfeasible {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}")]
    NumericalDivergence { epoch: usize },

    #[error("all {0} trials diverged")]
    AllTrialsDiverged(usize),
}
