use thiserror::Error;

pub type Result<T> = std::result::Result<T, AoiError>;

#[derive(Debug, Error)]
pub enum AoiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("source exhausted at slot {slot}")]
    TruncatedSource { slot: u64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("oracle budget exceeded: {needed} > {limit}")]
    Budget { needed: u128, limit: u128 },

    #[error("value iteration did not converge after {iterations} iterations (span {span:e})")]
    Convergence { iterations: usize, span: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trace is not CMA-consistent at slot {slot}: {msg}")]
    Consistency { slot: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AoiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AoiError::InvalidInput(msg.into())
    }
}
