use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("zero-length audio")]
    EmptyAudio,

    #[error("audio shorter than one analysis window ({samples} < {window} samples)")]
    AudioTooShort { samples: usize, window: usize },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient segments: {segments} segments for {clusters} clusters")]
    InsufficientSegments { segments: usize, clusters: usize },

    #[error("invalid labels: {0}")]
    Labels(String),

    #[error("token id {id} out of range for {n} tokens")]
    TokenOutOfRange { id: usize, n: usize },

    #[error("training diverged at epoch {epoch}, minibatch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("missing data: {0}")]
    Missing(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format { format, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
