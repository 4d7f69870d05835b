use std::fmt;
use std::str::FromStr;

use elicit_core::encode::{ModelFamily, DEFAULT_MAX_LEN};
use elicit_core::prediction::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

/// User-facing model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "bert-family")]
    BertFamily,
    Distilled,
    #[serde(alias = "gemma-family")]
    GemmaFamily,
    /// Small randomly initialized encoder for fast runs and CI.
    #[serde(alias = "tiny-stub")]
    TinyStub,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::BertFamily, ModelKind::Distilled, ModelKind::GemmaFamily, ModelKind::TinyStub];

    pub fn family(self) -> ModelFamily {
        match self {
            ModelKind::BertFamily | ModelKind::TinyStub => ModelFamily::EncoderBase,
            ModelKind::Distilled => ModelFamily::EncoderDistilled,
            ModelKind::GemmaFamily => ModelFamily::DecoderGemma,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BertFamily => "bert-family",
            ModelKind::Distilled => "distilled",
            ModelKind::GemmaFamily => "gemma-family",
            ModelKind::TinyStub => "tiny-stub",
        }
    }

    /// Whether a run needs pretrained weights on disk.
    pub fn needs_pretrained(self) -> bool {
        matches!(self, ModelKind::BertFamily | ModelKind::Distilled)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| format!("unknown model `{s}` (expected bert-family, distilled, gemma-family or tiny-stub)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adamw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear decay to zero after warmup.
    #[default]
    Linear,
}

/// Storage precision of frozen decoder weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    #[default]
    None,
    #[serde(rename = "8bit")]
    Int8,
    #[serde(rename = "4bit")]
    Int4,
}

impl Quantization {
    pub fn bits(self) -> Option<u8> {
        match self {
            Quantization::None => None,
            Quantization::Int8 => Some(8),
            Quantization::Int4 => Some(4),
        }
    }
}

impl FromStr for Quantization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(Quantization::None),
            "8bit" | "int8" => Ok(Quantization::Int8),
            "4bit" | "int4" => Ok(Quantization::Int4),
            other => Err(format!("unknown quantization `{other}` (expected none, 8bit or 4bit)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankConfig {
    pub rank: usize,
    pub alpha: f64,
    pub target_modules: Vec<String>,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        LowRankConfig { rank: 8, alpha: 16.0, target_modules: vec!["q_proj".into(), "v_proj".into()] }
    }
}

pub const LOW_RANK_TARGETS: [&str; 7] = ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_len: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub lr_schedule: LrSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Share of the training split held out for best-epoch selection.
    pub validation_fraction: f64,
    pub quantization: Quantization,
    pub low_rank_adaptation: Option<LowRankConfig>,
    pub decision_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 2e-5,
            max_len: DEFAULT_MAX_LEN,
            optimizer: OptimizerKind::Adamw,
            weight_decay: 0.01,
            warmup_steps: 0,
            lr_schedule: LrSchedule::Linear,
            grad_clip: Some(1.0),
            seed: 42,
            validation_fraction: 0.1,
            quantization: Quantization::None,
            low_rank_adaptation: None,
            decision_threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    /// Defaults for `kind`: the decoder family runs 4-bit with low-rank adapters.
    pub fn for_kind(kind: ModelKind) -> Self {
        let mut config = TrainConfig::default();
        if kind.family() == ModelFamily::DecoderGemma {
            config.quantization = Quantization::Int4;
            config.low_rank_adaptation = Some(LowRankConfig::default());
        }
        config
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let fail = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.max_len < 3 {
            return fail(format!("max_len must be at least 3, got {}", self.max_len));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return fail(format!("grad_clip must be positive, got {clip}"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!("validation_fraction must be in [0, 1), got {}", self.validation_fraction));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return fail(format!("decision_threshold must be in [0, 1], got {}", self.decision_threshold));
        }
        let decoder = kind.family() == ModelFamily::DecoderGemma;
        if !decoder && self.quantization != Quantization::None {
            return fail(format!("quantization applies only to the decoder family, not {kind}"));
        }
        if !decoder && self.low_rank_adaptation.is_some() {
            return fail(format!("low-rank adaptation applies only to the decoder family, not {kind}"));
        }
        if self.quantization != Quantization::None && self.low_rank_adaptation.is_none() {
            return fail("quantized base weights are frozen; low_rank_adaptation is required".into());
        }
        if let Some(lora) = &self.low_rank_adaptation {
            if lora.rank == 0 {
                return fail("low-rank adaptation rank must be at least 1".into());
            }
            if !(lora.alpha.is_finite() && lora.alpha > 0.0) {
                return fail(format!("low-rank alpha must be positive, got {}", lora.alpha));
            }
            if lora.target_modules.is_empty() {
                return fail("low-rank adaptation needs at least one target module".into());
            }
            for t in &lora.target_modules {
                if !LOW_RANK_TARGETS.contains(&t.as_str()) {
                    return fail(format!("unknown low-rank target `{t}`"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.max_len), (5, 32, 128));
        assert_eq!(c.learning_rate, 2e-5);
        assert!(c.validate(ModelKind::BertFamily).is_ok());
        let d = TrainConfig::for_kind(ModelKind::GemmaFamily);
        assert_eq!(d.quantization, Quantization::Int4);
        assert!(d.validate(ModelKind::GemmaFamily).is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { max_len: 2, ..TrainConfig::default() },
            TrainConfig { quantization: Quantization::Int8, ..TrainConfig::default() },
            TrainConfig { low_rank_adaptation: Some(LowRankConfig::default()), ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(ModelKind::TinyStub), Err(TrainError::Config(_))), "{c:?}");
        }
        let no_adapters = TrainConfig { low_rank_adaptation: None, ..TrainConfig::for_kind(ModelKind::GemmaFamily) };
        assert!(no_adapters.validate(ModelKind::GemmaFamily).is_err());
    }

    #[test]
    fn parse_kinds() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("tiny_stub".parse::<ModelKind>().unwrap(), ModelKind::TinyStub);
        assert!("gpt".parse::<ModelKind>().is_err());
        assert_eq!(serde_json::to_string(&Quantization::Int4).unwrap(), "\"4bit\"");
    }
}
