use thiserror::Error;

#[derive(Debug, Error)]
pub enum CflError {
    #[error("invalid bounding box {0:?}")]
    InvalidBox([f32; 4]),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("data generation error: {0}")]
    Generation(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, CflError>;
