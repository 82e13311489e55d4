use std::path::PathBuf;

use jscc_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("model: {0}")]
    Model(String),

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error("pruning: {0}")]
    Pruning(String),

    #[error("channel: {0}")]
    Chain(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch}, step {step}: non-finite loss {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

/// Failures reading a serialized model.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("not a model container (bad magic bytes)")]
    BadMagic,
    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("container truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("malformed container: {0}")]
    Malformed(String),
}

/// Failures of the separate-coding baseline's source decoder.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("bitstream shorter than {needed} bits ({available} available)")]
    Truncated { needed: usize, available: usize },
    #[error("bad bitstream magic {0:#06x}")]
    BadMagic(u32),
    #[error("header mismatch: {0}")]
    Header(String),
    #[error("payload checksum mismatch")]
    Checksum,
    #[error("image dimensions {0}x{1} are not multiples of 8")]
    Dimensions(usize, usize),
}
