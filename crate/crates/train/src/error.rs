use std::path::PathBuf;

use elicit_core::corpus::CorpusError;
use elicit_core::encode::EncodeError;
use elicit_core::textprep::PrepError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("checkpoint not found at {0}")]
    CheckpointNotFound(PathBuf),
    #[error("checkpoint at {path} is unusable: {reason}")]
    CheckpointCorrupt { path: PathBuf, reason: String },
    #[error("metadata mismatch on `{field}`: checkpoint has {checkpoint}, input has {input}")]
    MetadataMismatch { field: &'static str, checkpoint: String, input: String },
    #[error("pretrained weights at {path}: {reason}")]
    Pretrained { path: PathBuf, reason: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrainError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
