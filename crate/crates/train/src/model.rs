use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Tensor, Var};
use candle_nn::VarMap;
use elicit_core::encode::ModelFamily;
use elicit_core::hashing::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::{LowRankConfig, ModelKind, Quantization, TrainConfig};
use crate::decoder::{Decoder, DecoderConfig, Stored};
use crate::encoder::{Encoder, EncoderConfig, EncoderVariant};
use crate::error::{Result, TrainError};
use crate::nn::{Dropout, ParamFactory, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    Encoder(EncoderConfig),
    Decoder { config: DecoderConfig, quantization: Quantization, low_rank_adaptation: Option<LowRankConfig> },
}

impl Architecture {
    pub fn vocab_size(&self) -> usize {
        match self {
            Architecture::Encoder(c) => c.vocab_size,
            Architecture::Decoder { config, .. } => config.vocab_size,
        }
    }

    pub fn max_positions(&self) -> usize {
        match self {
            Architecture::Encoder(c) => c.max_positions,
            Architecture::Decoder { config, .. } => config.max_positions,
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Architecture::Encoder(c) if c.variant == EncoderVariant::DistilBert => ModelFamily::EncoderDistilled,
            Architecture::Encoder(_) => ModelFamily::EncoderBase,
            Architecture::Decoder { .. } => ModelFamily::DecoderGemma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub trainable: usize,
    pub frozen: usize,
}

impl ParameterCounts {
    pub fn total(&self) -> usize {
        self.trainable + self.frozen
    }

    pub fn trainable_fraction(&self) -> f64 {
        self.trainable as f64 / self.total().max(1) as f64
    }
}

enum Net {
    Encoder(Encoder),
    Decoder(Decoder),
}

/// A sequence classifier with its parameters.
pub struct Model {
    kind: ModelKind,
    architecture: Architecture,
    net: Net,
    varmap: VarMap,
    frozen: Vec<(String, Stored)>,
    loaded: Vec<String>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model").field("kind", &self.kind).field("architecture", &self.architecture).finish_non_exhaustive()
    }
}

impl Model {
    /// Random initialization for kinds that do not need pretrained weights.
    pub fn fresh(kind: ModelKind, vocab_size: usize, config: &TrainConfig) -> Result<Self> {
        let architecture = match kind {
            ModelKind::TinyStub => Architecture::Encoder(EncoderConfig::tiny(vocab_size)),
            ModelKind::GemmaFamily => Architecture::Decoder {
                config: DecoderConfig::tiny(vocab_size),
                quantization: config.quantization,
                low_rank_adaptation: config.low_rank_adaptation.clone(),
            },
            ModelKind::BertFamily | ModelKind::Distilled => {
                return Err(TrainError::Config(format!(
                    "{kind} needs a pretrained checkpoint directory (config.json, vocab.txt, model.safetensors)"
                )))
            }
        };
        Self::with_architecture(kind, architecture, config.seed)
    }

    pub fn with_architecture(kind: ModelKind, architecture: Architecture, seed: u64) -> Result<Self> {
        Self::build(kind, architecture, Source::Fresh, seed)
    }

    pub(crate) fn build(kind: ModelKind, architecture: Architecture, source: Source, seed: u64) -> Result<Self> {
        if architecture.family() != kind.family() {
            return Err(TrainError::Config(format!(
                "{kind} expects the {} family, architecture is {}",
                kind.family(),
                architecture.family()
            )));
        }
        let mut f = ParamFactory::new(source, seed, DType::F32);
        let (net, frozen) = match &architecture {
            Architecture::Encoder(c) => (Net::Encoder(Encoder::build(c, &mut f)?), Vec::new()),
            Architecture::Decoder { config, quantization, low_rank_adaptation } => {
                let (d, frozen) = Decoder::build(config, low_rank_adaptation.as_ref(), *quantization, &mut f)?;
                (Net::Decoder(d), frozen)
            }
        };
        Ok(Model { kind, architecture, net, varmap: f.varmap, frozen, loaded: f.loaded })
    }

    /// Reads weights written by [`Model::save_weights`]; every tensor must be present.
    pub fn load_weights(kind: ModelKind, architecture: Architecture, path: &Path) -> Result<Self> {
        let tensors = candle_core::safetensors::load(path, &candle_core::Device::Cpu)?;
        Self::build(kind, architecture, Source::Strict(tensors), 0)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    /// Names filled from a weight source rather than initialized.
    pub fn loaded_parameters(&self) -> &[String] {
        &self.loaded
    }

    /// Label logits `[B, 2]` for token ids `[B, T]` and a 0/1 mask `[B, T]`.
    pub fn forward(&self, ids: &Tensor, mask: &Tensor, dropout: Option<&Dropout>) -> Result<Tensor> {
        match &self.net {
            Net::Encoder(e) => e.forward(ids, mask, dropout),
            Net::Decoder(d) => d.forward(ids, mask, dropout),
        }
    }

    /// Input to the classification head, `[B, H]`.
    pub fn features(&self, ids: &Tensor, mask: &Tensor) -> Result<Tensor> {
        match &self.net {
            Net::Encoder(e) => e.features(ids, mask, None),
            Net::Decoder(d) => d.features(ids, mask, None),
        }
    }

    /// Trainable variables sorted by name.
    pub fn trainable_vars(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut vars: Vec<(String, Var)> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        vars
    }

    pub fn parameter_counts(&self) -> ParameterCounts {
        ParameterCounts {
            trainable: self.trainable_vars().iter().map(|(_, v)| v.elem_count()).sum(),
            frozen: self.frozen.iter().map(|(_, s)| s.elem_count()).sum(),
        }
    }

    /// Digest over every frozen tensor as stored; empty models hash the empty string.
    pub fn frozen_fingerprint(&self) -> Result<String> {
        let mut bytes = Vec::new();
        for (name, stored) in &self.frozen {
            bytes.extend_from_slice(name.as_bytes());
            bytes.extend_from_slice(&stored.bytes()?);
        }
        Ok(sha256_hex(bytes))
    }

    /// Every persisted tensor by name.
    pub fn weight_tensors(&self) -> Result<HashMap<String, Tensor>> {
        let mut out = HashMap::new();
        for (name, var) in self.trainable_vars() {
            out.insert(name, var.as_tensor().copy()?);
        }
        let device = candle_core::Device::Cpu;
        for (name, stored) in &self.frozen {
            match stored {
                Stored::Full(t) => {
                    out.insert(name.clone(), t.clone());
                }
                Stored::Quantized(q) => {
                    out.insert(format!("{name}.qcodes"), q.codes_tensor(&device)?);
                    out.insert(format!("{name}.qscales"), q.scales_tensor(&device)?);
                }
            }
        }
        Ok(out)
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.weight_tensors()?, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_requires_pretrained_for_published_encoders() {
        let cfg = TrainConfig::default();
        assert!(Model::fresh(ModelKind::BertFamily, 50, &cfg).is_err());
        let m = Model::fresh(ModelKind::TinyStub, 50, &cfg).unwrap();
        assert_eq!(m.parameter_counts().frozen, 0);
        assert_eq!(m.architecture().family(), ModelFamily::EncoderBase);
    }

    #[test]
    fn save_and_reload_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::for_kind(ModelKind::GemmaFamily);
        for (kind, cfg) in [(ModelKind::TinyStub, TrainConfig::default()), (ModelKind::GemmaFamily, cfg)] {
            let m = Model::fresh(kind, 40, &cfg).unwrap();
            let path = dir.path().join(format!("{kind}.safetensors"));
            m.save_weights(&path).unwrap();
            let back = Model::load_weights(kind, m.architecture().clone(), &path).unwrap();
            assert_eq!(back.frozen_fingerprint().unwrap(), m.frozen_fingerprint().unwrap());
            let ids = Tensor::new(&[[2u32, 7, 9, 3]], &candle_core::Device::Cpu).unwrap();
            let mask = Tensor::ones((1, 4), DType::F32, &candle_core::Device::Cpu).unwrap();
            let a: Vec<Vec<f32>> = m.forward(&ids, &mask, None).unwrap().to_vec2().unwrap();
            let b: Vec<Vec<f32>> = back.forward(&ids, &mask, None).unwrap().to_vec2().unwrap();
            assert_eq!(a, b);
        }
    }
}
