use thiserror::Error;

/// Errors raised anywhere in the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} values, got {actual}")]
    InputShape { expected: usize, actual: usize },

    #[error("model architectures differ")]
    ArchitectureMismatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid training config: {0}")]
    InvalidTraining(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid attack config: {0}")]
    Attack(String),

    #[error("invalid statistical input: {0}")]
    Stats(String),

    #[error("invalid defense input: {0}")]
    Defense(String),

    #[error("no models accepted for aggregation")]
    RoundRejected,

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
