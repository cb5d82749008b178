use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("timestamps must be strictly increasing (violated at index {0})")]
    NonMonotoneTimestamps(usize),

    #[error("non-finite state at integration step {0}")]
    NonFiniteState(usize),

    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("variable does not belong to this tape")]
    ForeignVariable,

    #[error("loss must be a 1x1 scalar, got {0}x{1}")]
    NonScalarLoss(usize, usize),

    #[error("rotation outside the log/exp domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
