use thiserror::Error;

/// Errors produced by the recovery library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing configuration: unknown names, bad exponents, malformed masks.
    #[error("configuration error: {0}")]
    Config(String),

    /// A budget `n` for which no valid sampling plan exists.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// An operation was called outside its domain (level mismatch, grid too coarse).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A gridded oracle was asked for a point that is not one of its nodes.
    #[error("off-grid query at {point:?}: {reason}")]
    OffGrid { point: Vec<f64>, reason: String },

    /// The oracle refused a new sample because its cap was reached.
    #[error("sample budget cap of {cap} distinct points exhausted")]
    BudgetCap { cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
