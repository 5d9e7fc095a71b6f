use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dance_core::Error),
    #[error("tensor backend: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stage order violation: {0}")]
    StageOrderViolation(String),
    #[error("non-finite {term} loss at epoch {epoch}, step {step} (dump: {})", dump.display())]
    NonFiniteLoss {
        term: String,
        epoch: usize,
        step: usize,
        dump: PathBuf,
    },
    #[error("model not trained for this mode: {0}")]
    UntrainedModel(String),
    #[error("empty pose sequence")]
    EmptySequence,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("label imbalance {real}:{fake} exceeds ratio {max_ratio}")]
    LabelImbalance {
        real: usize,
        fake: usize,
        max_ratio: f64,
    },
    #[error("training data holds a single label")]
    SingleLabel,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
