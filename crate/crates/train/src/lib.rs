//! Fine-tuning of transformer sequence classifiers for review usefulness,
//! with self-describing checkpoints and batch or single-text prediction.
//!
//! Models run on the CPU in f32. Published BERT and DistilBERT checkpoints
//! load by parameter name; the decoder family is a Gemma-layout stand-in
//! trained through low-rank adapters over frozen, optionally quantized
//! weights.

pub mod checkpoint;
pub mod config;
mod decoder;
mod encoder;
mod error;
pub mod gradcheck;
mod head;
mod model;
mod nn;
pub mod pipeline;
pub mod predict;
pub mod pretrained;
mod quant;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointManifest, CheckpointSpec, TextClassification, TrainingSummary};
pub use config::{LowRankConfig, LrSchedule, ModelKind, OptimizerKind, Quantization, TrainConfig};
pub use decoder::DecoderConfig;
pub use encoder::{EncoderConfig, EncoderVariant};
pub use error::{Result, TrainError};
pub use model::{Architecture, Model, ParameterCounts};
pub use nn::Activation;
pub use pipeline::{evaluate_checkpoint, train_corpus, TrainOutcome, TrainRequest};
pub use quant::QuantizedTensor;
pub use trainer::{fine_tune, EpochReport, FineTuneResult};
