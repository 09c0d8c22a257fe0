use thiserror::Error;

/// Errors produced by the simulation, learning and serialization layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("simulation diverged: {0}")]
    Diverged(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported contact shape pair: {0}")]
    UnsupportedShapes(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("episode is finished, call reset first")]
    EpisodeDone,

    #[error("training diverged at episode {episode}, agent {agent}: {what} = {value}")]
    TrainingDiverged {
        episode: usize,
        agent: usize,
        what: &'static str,
        value: f64,
    },

    #[error("agent {agent}: non-finite {what} ({value})")]
    NonFiniteLoss {
        agent: usize,
        what: &'static str,
        value: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
