use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),

    #[error("no legal action: every column is already sampled")]
    NoAction,

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("metric {0} has no closed-form best response")]
    UnsupportedMetric(&'static str),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("state budget exceeded: {states} states (limit {limit})")]
    Resource { states: usize, limit: usize },

    #[error("load failed: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_config(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
