//! Self-describing checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json        versioned description, see CheckpointManifest
//! <dir>/weights.safetensors  every persisted tensor
//! <dir>/vocab.txt            tokenizer vocabulary, one token per line
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use elicit_core::corpus::Corpus;
use elicit_core::encode::{
    encode, encode_corpus, label_mapping, EncodedDataset, EncodedExample, EncodingMetadata, ModelFamily, TextSource,
    TokenizerAdapter, Truncation, Vocab,
};
use elicit_core::hashing::sha256_hex;
use elicit_core::metrics::EvalReport;
use elicit_core::textprep::{prepare_text, PrepConfig};
use elicit_core::{Label, Prediction};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, TrainConfig};
use crate::error::{Result, TrainError};
use crate::model::{Architecture, Model};
use crate::predict::predict_scores;
use crate::trainer::FineTuneResult;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerInfo {
    pub family: ModelFamily,
    pub vocab_ref: String,
    pub vocab_size: usize,
    pub lowercase: bool,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_epoch: usize,
    pub per_epoch_loss: Vec<f64>,
    pub per_epoch_validation_accuracy: Vec<Option<f64>>,
    pub steps: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub trainable_parameters: usize,
    pub total_parameters: usize,
}

impl From<&FineTuneResult> for TrainingSummary {
    fn from(r: &FineTuneResult) -> Self {
        TrainingSummary {
            best_epoch: r.best_epoch,
            per_epoch_loss: r.per_epoch_loss(),
            per_epoch_validation_accuracy: r.epochs.iter().map(|e| e.validation.as_ref().and_then(|v| v.accuracy())).collect(),
            steps: r.steps,
            train_size: r.train_size,
            validation_size: r.validation_size,
            trainable_parameters: r.parameters.trainable,
            total_parameters: r.parameters.total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub model_name: String,
    pub model_kind: ModelKind,
    pub architecture: Architecture,
    pub tokenizer: TokenizerInfo,
    pub prep_config: PrepConfig,
    pub prep_config_hash: String,
    pub text_source: TextSource,
    pub max_len: usize,
    pub label_mapping: BTreeMap<String, u8>,
    pub train_config: TrainConfig,
    pub training: Option<TrainingSummary>,
    /// Validation report of the exported epoch.
    pub metric_snapshot: Option<EvalReport>,
    pub corpus_hash: Option<String>,
    pub weights_sha256: String,
    pub producer: String,
}

/// Everything about a checkpoint besides the model and tokenizer.
#[derive(Debug, Clone)]
pub struct CheckpointSpec {
    pub model_name: String,
    pub prep_config: PrepConfig,
    pub text_source: TextSource,
    pub train_config: TrainConfig,
    pub training: Option<TrainingSummary>,
    pub metric_snapshot: Option<EvalReport>,
    pub corpus_hash: Option<String>,
}

/// Outcome of classifying one free-text review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassification {
    pub label: Label,
    pub score: f64,
    pub confidence: f64,
    pub empty_after_prep: bool,
}

#[derive(Debug)]
pub struct Checkpoint {
    dir: PathBuf,
    manifest: CheckpointManifest,
    manifest_sha256: String,
    model: Model,
    adapter: TokenizerAdapter,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> TrainError {
    TrainError::CheckpointCorrupt { path: path.to_path_buf(), reason: reason.into() }
}

fn mismatch(field: &'static str, checkpoint: impl ToString, input: impl ToString) -> TrainError {
    TrainError::MetadataMismatch { field, checkpoint: checkpoint.to_string(), input: input.to_string() }
}

impl Checkpoint {
    /// Writes weights, vocabulary and manifest to `dir`, creating it if needed.
    pub fn save(model: Model, adapter: TokenizerAdapter, spec: CheckpointSpec, dir: &Path) -> Result<Checkpoint> {
        if adapter.family() != model.kind().family() {
            return Err(TrainError::Config(format!(
                "tokenizer family {} does not match model {}",
                adapter.family(),
                model.kind()
            )));
        }
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        let weights = dir.join(WEIGHTS_FILE);
        model.save_weights(&weights)?;
        let weight_bytes = fs::read(&weights).map_err(|e| TrainError::io(&weights, e))?;
        let vocab_path = dir.join(VOCAB_FILE);
        adapter.vocab().save(&vocab_path).map_err(|e| TrainError::io(&vocab_path, e))?;
        spec.prep_config.validate()?;
        let manifest = CheckpointManifest {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model_name: spec.model_name,
            model_kind: model.kind(),
            architecture: model.architecture().clone(),
            tokenizer: TokenizerInfo {
                family: adapter.family(),
                vocab_ref: adapter.vocab_ref().to_string(),
                vocab_size: adapter.vocab().len(),
                lowercase: adapter.lowercase(),
                truncation: adapter.truncation(),
            },
            prep_config_hash: spec.prep_config.config_hash(),
            prep_config: spec.prep_config,
            text_source: spec.text_source,
            max_len: spec.train_config.max_len,
            label_mapping: label_mapping(),
            train_config: spec.train_config,
            training: spec.training,
            metric_snapshot: spec.metric_snapshot,
            corpus_hash: spec.corpus_hash,
            weights_sha256: sha256_hex(&weight_bytes),
            producer: format!("elicit-train {}", env!("CARGO_PKG_VERSION")),
        };
        let manifest_sha256 = Self::write_manifest(dir, &manifest)?;
        Ok(Checkpoint { dir: dir.to_path_buf(), manifest, manifest_sha256, model, adapter })
    }

    fn write_manifest(dir: &Path, manifest: &CheckpointManifest) -> Result<String> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, &text).map_err(|e| TrainError::io(&path, e))?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(TrainError::CheckpointNotFound(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&manifest_path).map_err(|e| TrainError::io(&manifest_path, e))?;
        let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        match probe.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v as u32 == CHECKPOINT_SCHEMA_VERSION => {}
            Some(v) => return Err(corrupt(&manifest_path, format!("unsupported schema_version {v}"))),
            None => return Err(corrupt(&manifest_path, "missing schema_version")),
        }
        let manifest: CheckpointManifest = serde_json::from_value(probe).map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        let weights = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&weights).map_err(|e| corrupt(&weights, e.to_string()))?;
        if sha256_hex(&bytes) != manifest.weights_sha256 {
            return Err(corrupt(&weights, "weights digest differs from manifest"));
        }
        let vocab_path = dir.join(VOCAB_FILE);
        let vocab = Vocab::load(&vocab_path).map_err(|e| corrupt(&vocab_path, e.to_string()))?;
        if vocab.vocab_ref() != manifest.tokenizer.vocab_ref {
            return Err(corrupt(&vocab_path, "vocabulary digest differs from manifest"));
        }
        let adapter = TokenizerAdapter::new(manifest.tokenizer.family, vocab, manifest.tokenizer.lowercase)?
            .with_truncation(manifest.tokenizer.truncation);
        let model = Model::load_weights(manifest.model_kind, manifest.architecture.clone(), &weights)
            .map_err(|e| corrupt(&weights, e.to_string()))?;
        Ok(Checkpoint { dir: dir.to_path_buf(), manifest, manifest_sha256: sha256_hex(text.as_bytes()), model, adapter })
    }

    /// Loads and checks compatibility with an encoded dataset's metadata.
    pub fn load_for(dir: &Path, metadata: &EncodingMetadata) -> Result<Checkpoint> {
        let ckpt = Self::load(dir)?;
        ckpt.check_metadata(metadata)?;
        Ok(ckpt)
    }

    pub fn check_metadata(&self, meta: &EncodingMetadata) -> Result<()> {
        let m = &self.manifest;
        if meta.model_family != m.tokenizer.family {
            return Err(mismatch("model_family", m.tokenizer.family, meta.model_family));
        }
        if meta.vocab_ref != m.tokenizer.vocab_ref {
            return Err(mismatch("vocab_ref", &m.tokenizer.vocab_ref, &meta.vocab_ref));
        }
        if meta.max_len != m.max_len {
            return Err(mismatch("max_len", m.max_len, meta.max_len));
        }
        if meta.prep_config_hash != m.prep_config_hash {
            return Err(mismatch("prep_config_hash", &m.prep_config_hash, &meta.prep_config_hash));
        }
        if meta.text_source != m.text_source {
            return Err(mismatch("text_source", format!("{:?}", m.text_source), format!("{:?}", meta.text_source)));
        }
        if meta.label_mapping != m.label_mapping {
            return Err(mismatch("label_mapping", format!("{:?}", m.label_mapping), format!("{:?}", meta.label_mapping)));
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &CheckpointManifest {
        &self.manifest
    }

    /// Digest of the manifest file as written.
    pub fn manifest_sha256(&self) -> &str {
        &self.manifest_sha256
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn adapter(&self) -> &TokenizerAdapter {
        &self.adapter
    }

    /// Replaces the stored metric snapshot and rewrites the manifest.
    pub fn set_metric_snapshot(&mut self, report: EvalReport) -> Result<()> {
        self.manifest.metric_snapshot = Some(report);
        self.manifest_sha256 = Self::write_manifest(&self.dir, &self.manifest)?;
        Ok(())
    }

    /// Encodes `corpus` exactly as the training data was encoded.
    pub fn encode_corpus(&self, corpus: &Corpus) -> Result<EncodedDataset> {
        let m = &self.manifest;
        Ok(encode_corpus(corpus, &m.prep_config, &self.adapter, m.max_len, m.text_source)?)
    }

    /// Encodes one review; the boolean is set when preprocessing removed every token.
    pub fn encode_text(&self, text: &str) -> Result<(EncodedExample, bool)> {
        let m = &self.manifest;
        let tokens = prepare_text(text, &m.prep_config)?;
        let empty = tokens.is_empty();
        let input = match m.text_source {
            TextSource::Cleaned => tokens.join(" "),
            TextSource::Raw => text.to_string(),
        };
        Ok((encode(&input, &self.adapter, m.max_len)?, empty))
    }

    pub fn classify_text(&self, text: &str, threshold: f64) -> Result<TextClassification> {
        let (example, empty_after_prep) = self.encode_text(text)?;
        let score = predict_scores(&self.model, &[&example])?[0];
        let p = Prediction::from_score(elicit_core::RecordId::new("inline"), score, threshold);
        Ok(TextClassification { label: p.predicted_label, score: p.score, confidence: p.confidence(), empty_after_prep })
    }

    /// One prediction per row, in row order, after a metadata check.
    pub fn predict(&self, dataset: &EncodedDataset, threshold: f64) -> Result<Vec<Prediction>> {
        self.check_metadata(&dataset.metadata)?;
        let examples: Vec<&EncodedExample> = dataset.examples().collect();
        let scores = predict_scores(&self.model, &examples)?;
        Ok(dataset.rows.iter().zip(scores).map(|(row, s)| Prediction::from_score(row.record_id.clone(), s, threshold)).collect())
    }
}
