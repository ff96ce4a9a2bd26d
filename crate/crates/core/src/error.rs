use thiserror::Error;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid test condition: {0}")]
    InvalidCondition(String),

    #[error("invalid test plan: {0}")]
    InvalidPlan(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("infinite mean lifetime: shape {beta} must exceed 1")]
    InfiniteMean { beta: f64 },

    #[error("infinite divergence: model probability is zero where the empirical probability is {empirical}")]
    InfiniteDivergence { empirical: f64 },

    #[error("non-finite {what} at condition {condition}")]
    NonFinite { what: &'static str, condition: usize },

    #[error("singular {what}: condition number {condition_number:.3e} exceeds {limit:.1e}")]
    Singular {
        what: String,
        condition_number: f64,
        limit: f64,
    },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("model not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown dataset `{name}` (available: {available})")]
    UnknownDataset { name: String, available: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
