use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal `{signal}` has zero marginal probability under the prior and policy")]
    ZeroMarginalSignal { signal: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("policy set is empty")]
    EmptyPolicySet,

    #[error("invalid probability vector at {field}: {reason}")]
    InvalidDistribution { field: String, reason: String },

    #[error("invalid value at {field}: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("belief kernel has no row for context {context}")]
    UnindexedContext { context: String },

    #[error("lifted state space too large: {count} states exceed the cap of {cap}")]
    StateSpaceTooLarge { count: usize, cap: usize },

    #[error("strategy undefined on reachable observation {observation}")]
    UndefinedOnReachableObservation { observation: String },

    #[error("epoch {t} out of range 0..={max}")]
    EpochOutOfRange { t: usize, max: usize },

    #[error("conditioning event has zero probability: {context}")]
    UnsupportedAction { context: String },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("missing matrix {0}")]
    MissingMatrix(String),

    #[error("rank condition failed: {0}")]
    RankConditionFailed(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset format error at line {line}: {reason}")]
    DatasetFormat { line: usize, reason: String },

    #[error("config error in {field}: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
