use thiserror::Error;

/// Invalid parameters, detected before any message is exchanged.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("ring width {bits} with {frac_bits} fraction bits is unsupported (need frac_bits + 2 < bits <= 64)")]
    RingWidth { bits: u32, frac_bits: u32 },
    #[error("segment count must be at least 1, got {0}")]
    Segments(usize),
    #[error("bucket count must be at least 2, got {0}")]
    Buckets(usize),
    #[error("tree depth must be at most 16, got {0}")]
    Depth(usize),
    #[error("gamma must be positive and representable, got {0}")]
    Gamma(f64),
    #[error("eta must be in (0, 1], got {0}")]
    Eta(f64),
    #[error("{what}: worst case 2^{needed:.2} exceeds the comparison range 2^{limit}")]
    OverflowBudget { what: &'static str, needed: f64, limit: u32 },
    #[error("party {party} holds no features")]
    EmptyParty { party: usize },
    #[error("{0}")]
    Other(String),
}

/// Failures during an online run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("peer disconnected at round {round}")]
    Disconnected { round: u64 },
    #[error("round {round}: expected tag `{expected}`, peer sent `{got}`")]
    RoundMismatch { round: u64, expected: String, got: String },
    #[error("round {round}: expected {expected} payload bytes, got {got}")]
    FrameLength { round: u64, expected: usize, got: usize },
    #[error("correlated randomness {kind}#{counter} consumed twice")]
    KeyReuse { kind: &'static str, counter: u64 },
    #[error("both shares belong to party {0}")]
    SameParty(usize),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("transport: {0}")]
    Io(String),
}

/// Errors while loading or shaping datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("row {row}: missing label")]
    MissingLabel { row: usize },
    #[error("row {row}: label `{value}` is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("label column `{0}` not found")]
    NoLabelColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error("split point {split} must be in 1..{features}")]
    SplitCols { split: usize, features: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A real value that does not fit the fixed-point range.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{value} is outside the fixed-point range (|x| < {limit})")]
pub struct RangeError {
    pub value: f64,
    pub limit: f64,
}
