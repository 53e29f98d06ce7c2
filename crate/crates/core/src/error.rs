use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// A caller handed over data that violates a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("assembly failed for agent {agent}: {reason}")]
    Assembly { agent: String, reason: String },

    #[error("numerical failure in {context} (residual {residual:e})")]
    Numerical { context: String, residual: f64 },

    #[error("iteration diverged at t = {iteration}: {what} is not finite")]
    Divergence { iteration: usize, what: String },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Every schema problem found in a config document, reported together.
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
