use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty kernel")]
    EmptyKernel,
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("empty region")]
    EmptyRegion,
    #[error("region outside frame: {0}")]
    OutsideFrame(String),
    #[error("no salient segment found in the blur kernel")]
    NoSalientSegment,
    #[error("predicted trajectory leaves the frame")]
    ObjectExit,
    #[error("index misalignment: {0}")]
    Misaligned(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
