use thiserror::Error;

pub type Result<T, E = EdlmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EdlmError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// `x_t` is unmasked at `position` but disagrees with `x0` there.
    #[error("inconsistent (x_t, x0) pair at position {position}: x_t={noisy}, x0={clean}")]
    InconsistentPair {
        position: usize,
        noisy: u32,
        clean: u32,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("enumeration capacity exceeded: {states} states (cap {cap})")]
    Capacity { states: u128, cap: u128 },

    #[error("training diverged at step {step}: loss={loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EdlmError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EdlmError::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        EdlmError::Precondition(msg.into())
    }
}
