//! Published encoder checkpoints in the common directory layout:
//! `config.json`, `vocab.txt`, optional `tokenizer_config.json`, and
//! `model.safetensors` or `pytorch_model.bin`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use elicit_core::encode::{TokenizerAdapter, Vocab};
use serde_json::Value;

use crate::config::ModelKind;
use crate::encoder::{EncoderConfig, EncoderVariant};
use crate::error::{Result, TrainError};
use crate::model::{Architecture, Model};
use crate::nn::Source;

pub struct Pretrained {
    pub model: Model,
    pub adapter: TokenizerAdapter,
}

fn err(path: &Path, reason: impl Into<String>) -> TrainError {
    TrainError::Pretrained { path: path.to_path_buf(), reason: reason.into() }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| err(path, e.to_string()))
}

/// Strips the model prefix and maps legacy norm names.
fn canonical_name(name: &str) -> String {
    let name = name.strip_prefix("bert.").or_else(|| name.strip_prefix("distilbert.")).unwrap_or(name);
    if let Some(stem) = name.strip_suffix(".gamma") {
        format!("{stem}.weight")
    } else if let Some(stem) = name.strip_suffix(".beta") {
        format!("{stem}.bias")
    } else {
        name.to_string()
    }
}

fn read_weights(dir: &Path) -> Result<HashMap<String, Tensor>> {
    let device = Device::Cpu;
    let st = dir.join("model.safetensors");
    let raw: Vec<(String, Tensor)> = if st.exists() {
        candle_core::safetensors::load(&st, &device)?.into_iter().collect()
    } else {
        let bin = dir.join("pytorch_model.bin");
        if !bin.exists() {
            return Err(err(dir, "neither model.safetensors nor pytorch_model.bin is present"));
        }
        candle_core::pickle::read_all(&bin)?
    };
    Ok(raw.into_iter().map(|(k, v)| (canonical_name(&k), v)).collect())
}

pub fn load_pretrained(dir: &Path, kind: ModelKind, seed: u64) -> Result<Pretrained> {
    if !dir.is_dir() {
        return Err(TrainError::CheckpointNotFound(dir.to_path_buf()));
    }
    let expected = match kind {
        ModelKind::BertFamily | ModelKind::TinyStub => EncoderVariant::Bert,
        ModelKind::Distilled => EncoderVariant::DistilBert,
        ModelKind::GemmaFamily => {
            return Err(err(dir, "published decoder checkpoints are not supported; gemma-family runs the built-in stand-in"))
        }
    };
    let config = EncoderConfig::from_hf(&read_json(&dir.join("config.json"))?)?;
    if config.variant != expected {
        return Err(err(dir, format!("{kind} expects a {expected:?} checkpoint, found {:?}", config.variant)));
    }
    let vocab = Vocab::load(&dir.join("vocab.txt"))?;
    if vocab.len() != config.vocab_size {
        return Err(err(dir, format!("vocab.txt has {} entries, config says {}", vocab.len(), config.vocab_size)));
    }
    let tok_cfg = dir.join("tokenizer_config.json");
    let lowercase =
        if tok_cfg.exists() { read_json(&tok_cfg)?.get("do_lower_case").and_then(Value::as_bool).unwrap_or(true) } else { true };
    let adapter = TokenizerAdapter::new(kind.family(), vocab, lowercase)?;
    let tensors = read_weights(dir)?;
    let source = Source::Partial { tensors, optional: EncoderConfig::is_head_param };
    let model = Model::build(kind, Architecture::Encoder(config), source, seed).map_err(|e| err(dir, e.to_string()))?;
    log::info!("loaded {} pretrained tensors from {}", model.loaded_parameters().len(), dir.display());
    Ok(Pretrained { model, adapter })
}

/// Writes `model` in the published layout so [`load_pretrained`] can read it.
pub fn export_pretrained(model: &Model, adapter: &TokenizerAdapter, dir: &Path) -> Result<PathBuf> {
    let Architecture::Encoder(config) = model.architecture() else {
        return Err(TrainError::Config("only encoders export to the published layout".into()));
    };
    fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let prefix = match config.variant {
        EncoderVariant::Bert => "bert.",
        EncoderVariant::DistilBert => "distilbert.",
    };
    let tensors: HashMap<String, Tensor> = model
        .weight_tensors()?
        .into_iter()
        .map(
            |(k, v)| {
                if EncoderConfig::is_head_param(&k) && !k.starts_with("pooler.") {
                    (k, v)
                } else {
                    (format!("{prefix}{k}"), v)
                }
            },
        )
        .collect();
    candle_core::safetensors::save(&tensors, dir.join("model.safetensors"))?;
    let config_json = serde_json::to_string_pretty(&config.to_hf()).expect("config serializes");
    let write = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(|e| TrainError::io(dir.join(name), e));
    write("config.json", &config_json)?;
    write("vocab.txt", &adapter.vocab().to_vocab_txt())?;
    write("tokenizer_config.json", &serde_json::json!({ "do_lower_case": adapter.lowercase() }).to_string())?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_canonicalized() {
        assert_eq!(canonical_name("bert.embeddings.LayerNorm.gamma"), "embeddings.LayerNorm.weight");
        assert_eq!(canonical_name("distilbert.transformer.layer.0.ffn.lin1.bias"), "transformer.layer.0.ffn.lin1.bias");
        assert_eq!(canonical_name("classifier.weight"), "classifier.weight");
    }

    #[test]
    fn decoder_checkpoints_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.json"), "{}").unwrap();
        assert!(load_pretrained(dir.path(), ModelKind::GemmaFamily, 0).is_err());
        assert!(matches!(
            load_pretrained(&dir.path().join("absent"), ModelKind::BertFamily, 0),
            Err(TrainError::CheckpointNotFound(_))
        ));
    }
}
