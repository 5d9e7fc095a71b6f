use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("no person detected")]
    NoPersonDetected,
    #[error("topology mismatch: expected {expected}, found {found}")]
    TopologyMismatch { expected: String, found: String },
    #[error("poses share no present joints")]
    NoCommonJoints,
    #[error("missing joint: {0}")]
    MissingJoint(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("region {box_:?} out of bounds for {width}x{height} image")]
    OutOfBounds {
        box_: (u32, u32, u32, u32),
        width: u32,
        height: u32,
    },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate close/far range")]
    DegenerateRange,
    #[error("non-positive subject height")]
    NonPositiveHeight,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("invalid train fraction {0}")]
    InvalidFraction(f64),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
