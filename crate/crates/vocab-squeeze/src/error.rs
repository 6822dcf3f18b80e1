//! Crate-wide error type.

/// Errors produced by parsing, estimation, and the optimizers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: negative count")]
    NegativeCount { line: usize },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature `{0}` has no values left after min-count filtering")]
    EmptyFeature(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("masses must sum to 1 (got {0})")]
    UnnormalizedMass(f64),

    #[error("P(C=0) = {0} is degenerate; f is undefined and mutual information is identically 0")]
    DegenerateLabel(f64),

    #[error("block mass must be positive (got {0})")]
    NonPositiveMass(f64),

    #[error("boundary {boundary} out of range 1..={max}")]
    BoundaryOutOfRange { boundary: usize, max: usize },

    #[error("boundary {0} already selected")]
    DuplicateBoundary(usize),

    #[error("compression map covers {covered} values but the feature has {expected}")]
    MapSizeMismatch { covered: usize, expected: usize },

    #[error("cluster id {id} out of range for {clusters} clusters")]
    ClusterOutOfRange { id: usize, clusters: usize },

    #[error("budget {budget} below minimum {min}")]
    BudgetTooSmall { budget: usize, min: usize },

    #[error("instance too large for exact search: {0}")]
    InstanceTooLarge(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
