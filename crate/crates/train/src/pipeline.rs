use std::path::{Path, PathBuf};

use elicit_core::corpus::Corpus;
use elicit_core::encode::{encode_corpus, TextSource, TokenizerAdapter};
use elicit_core::metrics::{confusion, EvalReport};
use elicit_core::textprep::{prepare_text, PrepConfig};
use elicit_core::Prediction;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointSpec, TrainingSummary};
use crate::config::{ModelKind, TrainConfig};
use crate::error::{Result, TrainError};
use crate::model::Model;
use crate::pretrained::load_pretrained;
use crate::trainer::{fine_tune, EpochReport, FineTuneResult};

/// Vocabulary cap for models built from the training corpus.
pub const FRESH_VOCAB_SIZE: usize = 8000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub kind: ModelKind,
    pub model_name: String,
    /// Published checkpoint directory; required for the published encoders.
    pub pretrained: Option<PathBuf>,
    pub prep_config: PrepConfig,
    pub text_source: TextSource,
    pub config: TrainConfig,
}

impl TrainRequest {
    pub fn new(kind: ModelKind) -> Self {
        TrainRequest {
            kind,
            model_name: kind.to_string(),
            pretrained: None,
            prep_config: PrepConfig::default(),
            text_source: TextSource::Cleaned,
            config: TrainConfig::for_kind(kind),
        }
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub result: FineTuneResult,
}

fn initial_model(train: &Corpus, req: &TrainRequest) -> Result<(Model, TokenizerAdapter)> {
    if let Some(dir) = &req.pretrained {
        let p = load_pretrained(dir, req.kind, req.config.seed)?;
        return Ok((p.model, p.adapter));
    }
    if req.kind.needs_pretrained() {
        return Err(TrainError::Config(format!(
            "{} needs --pretrained DIR with config.json, vocab.txt and model weights",
            req.kind
        )));
    }
    let texts = train
        .iter()
        .map(|r| match req.text_source {
            TextSource::Cleaned => prepare_text(&r.review_description, &req.prep_config).map(|t| t.join(" ")),
            TextSource::Raw => Ok(r.review_description.clone()),
        })
        .collect::<Result<Vec<String>, _>>()?;
    let adapter = TokenizerAdapter::build(req.kind.family(), texts.iter().map(String::as_str), FRESH_VOCAB_SIZE)?;
    let model = Model::fresh(req.kind, adapter.vocab().len(), &req.config)?;
    Ok((model, adapter))
}

/// Encodes `train`, fine-tunes and writes the checkpoint to `out_dir`.
pub fn train_corpus(
    train: &Corpus,
    req: &TrainRequest,
    out_dir: &Path,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    req.config.validate(req.kind)?;
    train.require_labels()?;
    let (mut model, adapter) = initial_model(train, req)?;
    let dataset = encode_corpus(train, &req.prep_config, &adapter, req.config.max_len, req.text_source)?;
    let result = fine_tune(&mut model, &dataset, &req.config, on_epoch)?;
    let spec = CheckpointSpec {
        model_name: req.model_name.clone(),
        prep_config: req.prep_config.clone(),
        text_source: req.text_source,
        train_config: req.config.clone(),
        training: Some(TrainingSummary::from(&result)),
        metric_snapshot: result.best_validation().cloned(),
        corpus_hash: Some(train.content_hash()),
    };
    let checkpoint = Checkpoint::save(model, adapter, spec, out_dir)?;
    Ok(TrainOutcome { checkpoint, result })
}

/// Predictions on a labeled corpus and the resulting report.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, test: &Corpus, threshold: f64) -> Result<(Vec<Prediction>, EvalReport)> {
    test.require_labels()?;
    let dataset = ckpt.encode_corpus(test)?;
    let predictions = ckpt.predict(&dataset, threshold)?;
    let m = confusion(&predictions, test.records()).map_err(|e| TrainError::Data(e.to_string()))?;
    Ok((predictions, EvalReport::new(ckpt.manifest().model_name.clone(), m)))
}
