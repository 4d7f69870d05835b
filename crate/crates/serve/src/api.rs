//! Request and response bodies. Every JSON response is wrapped in
//! [`Envelope`], which adds `schema_version`.

use std::path::PathBuf;

use elicit_core::metrics::EvalReport;
use elicit_core::{Label, RecordId};
use elicit_train::ModelKind;
use serde::{Deserialize, Serialize};

use crate::store::{LabelEntry, QueuePolicy, StoreCounts};

pub const API_SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_HEADER: &str = "x-elicit-schema-version";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(body: T) -> Self {
        Envelope { schema_version: API_SCHEMA_VERSION, body }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
    /// Must name the loaded model when given.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub label: Label,
    pub score: f64,
    pub confidence: f64,
    pub empty_after_prep: bool,
    pub model_name: String,
    pub checkpoint_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub label: Label,
    pub score: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub record_id: RecordId,
    pub app_name: String,
    pub username: String,
    pub rating: u8,
    pub text: String,
    /// Present only while a checkpoint is loaded.
    pub suggestion: Option<Suggestion>,
    pub history: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub policy: QueuePolicy,
    pub model_name: Option<String>,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueQuery {
    pub limit: Option<usize>,
    pub policy: Option<QueuePolicy>,
    pub app: Option<String>,
    pub min_rating: Option<u8>,
    pub max_rating: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub label: String,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRequest {
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "jsonl".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub record_id: RecordId,
    pub app_name: String,
    pub username: String,
    pub rating: u8,
    pub text: String,
    pub label: Option<Label>,
    pub history: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub record_id: RecordId,
    pub history: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsResponse {
    #[serde(flatten)]
    pub counts: StoreCounts,
    pub history_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_name: String,
    pub model_kind: ModelKind,
    pub checkpoint_sha256: String,
    pub dir: PathBuf,
    pub metric_snapshot: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub model: Option<ModelInfo>,
    pub counts: StoreCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRequest {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJobRequest {
    pub model: ModelKind,
    pub model_name: Option<String>,
    pub pretrained: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_len: Option<usize>,
    pub seed: Option<u64>,
    /// Share of labeled records used for training; the rest is evaluated.
    pub train_fraction: f64,
}

impl Default for TrainJobRequest {
    fn default() -> Self {
        TrainJobRequest {
            model: ModelKind::TinyStub,
            model_name: None,
            pretrained: None,
            epochs: None,
            batch_size: None,
            learning_rate: None,
            max_len: None,
            seed: None,
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: u64,
    pub state: JobState,
    pub model: ModelKind,
    pub epochs_total: usize,
    pub epochs_done: usize,
    pub per_epoch_train_loss: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}
