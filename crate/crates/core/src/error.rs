use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("hierarchy contains a cycle: {}", fmt_cycle(.0))]
    Cycle(Vec<usize>),

    #[error("index {index} out of range 1..={bound} ({what})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("attribute count K={0} exceeds the enumeration limit {1}")]
    KTooLarge(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid Q-matrix: {0}")]
    InvalidQ(String),

    #[error("edge set is not a subset of the null hierarchy: {0:?} missing")]
    NotASubset(Vec<(usize, usize)>),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("profile support is empty")]
    EmptySupport,

    #[error("the all-zero base profile is not in the fitted support")]
    BaseProfileMissing,

    #[error("nested fits out of order: null loglik {null} exceeds alternative loglik {alt}")]
    Nesting { null: f64, alt: f64 },

    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDf(usize),

    #[error("mixture weights must be nonnegative and sum to 1 (sum = {0})")]
    Weights(f64),

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error("too few items: J={j} but at least {need} are required")]
    TooFewItems { j: usize, need: usize },

    #[error("response data has {got} columns, expected {expected}")]
    ColumnCountMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
}

fn fmt_cycle(nodes: &[usize]) -> String {
    nodes
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

pub type Result<T> = std::result::Result<T, Error>;
