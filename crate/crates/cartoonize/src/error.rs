use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{dim} = {value} is not divisible by 8")]
    NotDivisibleBy8 { dim: &'static str, value: usize },

    #[error("image dimension {dim} = {value} below minimum {min}")]
    ImageTooSmall {
        dim: &'static str,
        value: usize,
        min: usize,
    },

    #[error("channel count mismatch: {left} vs {right} in {op}")]
    ChannelMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("batch size mismatch: {left} vs {right} in {op}")]
    BatchMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("feature model inconsistent at scale {scale}: {reason}")]
    BadFeatureModel { scale: usize, reason: String },

    #[error("length mismatch: {left} vs {right} in {op}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite loss term `{term}` at step {step}")]
    NumericFailure { term: &'static str, step: u64 },

    #[error("no usable images in {dir} ({skipped} skipped)")]
    EmptyDataset { dir: PathBuf, skipped: usize },

    #[error("weight archive error: {0}")]
    Archive(String),

    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("tile overlap {overlap} below receptive-field radius {required}")]
    OverlapTooSmall { overlap: usize, required: usize },

    #[error("invalid tiling: {0}")]
    BadTiling(String),

    #[error("image decode error for {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite { .. } | Error::NumericFailure { .. } => 3,
            _ => 2,
        }
    }
}
