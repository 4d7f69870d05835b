//! Bidirectional encoders in the BERT and DistilBERT layouts. Parameter
//! names follow the published checkpoints with the model prefix removed.

use candle_core::Tensor;
use candle_nn::Linear;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, TrainError};
use crate::head::{ClassificationHead, HeadActivation};
use crate::nn::{linear, maybe_dropout, padding_bias, softmax_last, Activation, Dropout, Init, LayerNorm, ParamFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    Bert,
    DistilBert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    /// Zero for layouts without segment embeddings.
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    pub activation: Activation,
    pub dropout: f64,
    pub initializer_range: f64,
}

impl EncoderConfig {
    /// The small randomly initialized stand-in used for fast runs.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            variant: EncoderVariant::Bert,
            vocab_size,
            hidden_size: 32,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 64,
            max_positions: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            activation: Activation::Gelu,
            dropout: 0.1,
            initializer_range: 0.02,
        }
    }

    /// Reads a published `config.json`.
    pub fn from_hf(value: &Value) -> Result<Self> {
        let bad = |msg: String| TrainError::Config(format!("config.json: {msg}"));
        let get_usize = |key: &str| -> Result<usize> {
            value.get(key).and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| bad(format!("missing integer `{key}`")))
        };
        let get_f64 = |key: &str, default: f64| value.get(key).and_then(Value::as_f64).unwrap_or(default);
        let act = |key: &str| -> Result<Activation> {
            let name = value.get(key).and_then(Value::as_str).unwrap_or("gelu");
            Activation::from_hf(name).ok_or_else(|| bad(format!("unsupported activation `{name}`")))
        };
        let model_type = value.get("model_type").and_then(Value::as_str).unwrap_or("bert");
        let config = if model_type == "distilbert" {
            EncoderConfig {
                variant: EncoderVariant::DistilBert,
                vocab_size: get_usize("vocab_size")?,
                hidden_size: get_usize("dim")?,
                num_layers: get_usize("n_layers")?,
                num_heads: get_usize("n_heads")?,
                intermediate_size: get_usize("hidden_dim")?,
                max_positions: get_usize("max_position_embeddings")?,
                type_vocab_size: 0,
                layer_norm_eps: 1e-12,
                activation: act("activation")?,
                dropout: get_f64("dropout", 0.1),
                initializer_range: get_f64("initializer_range", 0.02),
            }
        } else {
            EncoderConfig {
                variant: EncoderVariant::Bert,
                vocab_size: get_usize("vocab_size")?,
                hidden_size: get_usize("hidden_size")?,
                num_layers: get_usize("num_hidden_layers")?,
                num_heads: get_usize("num_attention_heads")?,
                intermediate_size: get_usize("intermediate_size")?,
                max_positions: get_usize("max_position_embeddings")?,
                type_vocab_size: get_usize("type_vocab_size").unwrap_or(2),
                layer_norm_eps: get_f64("layer_norm_eps", 1e-12),
                activation: act("hidden_act")?,
                dropout: get_f64("hidden_dropout_prob", 0.1),
                initializer_range: get_f64("initializer_range", 0.02),
            }
        };
        config.check()?;
        Ok(config)
    }

    /// Published `config.json` form, readable by [`EncoderConfig::from_hf`].
    pub fn to_hf(&self) -> Value {
        let act = match self.activation {
            Activation::Gelu => "gelu",
            Activation::GeluTanh => "gelu_new",
            Activation::Relu => "relu",
        };
        match self.variant {
            EncoderVariant::Bert => serde_json::json!({
                "model_type": "bert",
                "vocab_size": self.vocab_size,
                "hidden_size": self.hidden_size,
                "num_hidden_layers": self.num_layers,
                "num_attention_heads": self.num_heads,
                "intermediate_size": self.intermediate_size,
                "max_position_embeddings": self.max_positions,
                "type_vocab_size": self.type_vocab_size,
                "layer_norm_eps": self.layer_norm_eps,
                "hidden_act": act,
                "hidden_dropout_prob": self.dropout,
                "initializer_range": self.initializer_range,
                "pad_token_id": 0,
            }),
            EncoderVariant::DistilBert => serde_json::json!({
                "model_type": "distilbert",
                "vocab_size": self.vocab_size,
                "dim": self.hidden_size,
                "n_layers": self.num_layers,
                "n_heads": self.num_heads,
                "hidden_dim": self.intermediate_size,
                "max_position_embeddings": self.max_positions,
                "activation": act,
                "dropout": self.dropout,
                "initializer_range": self.initializer_range,
                "pad_token_id": 0,
            }),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(TrainError::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if self.vocab_size == 0 || self.num_layers == 0 {
            return Err(TrainError::Config("vocab_size and num_layers must be positive".into()));
        }
        Ok(())
    }

    pub fn head_prefix(&self) -> &'static str {
        match self.variant {
            EncoderVariant::Bert => "pooler.dense",
            EncoderVariant::DistilBert => "pre_classifier",
        }
    }

    /// Names of the classification head; published base checkpoints may lack them.
    pub fn is_head_param(name: &str) -> bool {
        name.starts_with("pooler.") || name.starts_with("pre_classifier.") || name.starts_with("classifier.")
    }
}

struct LayerNames {
    q: String,
    k: String,
    v: String,
    o: String,
    attn_norm: String,
    ffn_in: String,
    ffn_out: String,
    out_norm: String,
}

fn layer_names(variant: EncoderVariant, i: usize) -> LayerNames {
    match variant {
        EncoderVariant::Bert => {
            let p = format!("encoder.layer.{i}");
            LayerNames {
                q: format!("{p}.attention.self.query"),
                k: format!("{p}.attention.self.key"),
                v: format!("{p}.attention.self.value"),
                o: format!("{p}.attention.output.dense"),
                attn_norm: format!("{p}.attention.output.LayerNorm"),
                ffn_in: format!("{p}.intermediate.dense"),
                ffn_out: format!("{p}.output.dense"),
                out_norm: format!("{p}.output.LayerNorm"),
            }
        }
        EncoderVariant::DistilBert => {
            let p = format!("transformer.layer.{i}");
            LayerNames {
                q: format!("{p}.attention.q_lin"),
                k: format!("{p}.attention.k_lin"),
                v: format!("{p}.attention.v_lin"),
                o: format!("{p}.attention.out_lin"),
                attn_norm: format!("{p}.sa_layer_norm"),
                ffn_in: format!("{p}.ffn.lin1"),
                ffn_out: format!("{p}.ffn.lin2"),
                out_norm: format!("{p}.output_layer_norm"),
            }
        }
    }
}

struct EncoderLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    attn_norm: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    out_norm: LayerNorm,
}

pub(crate) struct Encoder {
    config: EncoderConfig,
    word: Tensor,
    position: Tensor,
    token_type: Option<Tensor>,
    emb_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
    pub(crate) head: ClassificationHead,
}

impl Encoder {
    pub fn build(config: &EncoderConfig, f: &mut ParamFactory) -> Result<Self> {
        config.check()?;
        let h = config.hidden_size;
        let std = config.initializer_range;
        let word = f.trainable("embeddings.word_embeddings.weight", &[config.vocab_size, h], Init::Normal(std))?;
        let position = f.trainable("embeddings.position_embeddings.weight", &[config.max_positions, h], Init::Normal(std))?;
        let token_type = if config.type_vocab_size > 0 {
            Some(f.trainable("embeddings.token_type_embeddings.weight", &[config.type_vocab_size, h], Init::Normal(std))?)
        } else {
            None
        };
        let eps = config.layer_norm_eps;
        let emb_norm = f.layer_norm("embeddings.LayerNorm", h, eps)?;
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let n = layer_names(config.variant, i);
            layers.push(EncoderLayer {
                q: f.linear(&n.q, h, h, std)?,
                k: f.linear(&n.k, h, h, std)?,
                v: f.linear(&n.v, h, h, std)?,
                o: f.linear(&n.o, h, h, std)?,
                attn_norm: f.layer_norm(&n.attn_norm, h, eps)?,
                ffn_in: f.linear(&n.ffn_in, h, config.intermediate_size, std)?,
                ffn_out: f.linear(&n.ffn_out, config.intermediate_size, h, std)?,
                out_norm: f.layer_norm(&n.out_norm, h, eps)?,
            });
        }
        let activation = match config.variant {
            EncoderVariant::Bert => HeadActivation::Tanh,
            EncoderVariant::DistilBert => HeadActivation::Relu,
        };
        let head = ClassificationHead::build(f, Some((config.head_prefix(), activation)), "classifier", h, std, config.dropout)?;
        Ok(Encoder { config: config.clone(), word, position, token_type, emb_norm, layers, head })
    }

    fn attention(&self, layer: &EncoderLayer, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (b, t, h) = x.dims3()?;
        let nh = self.config.num_heads;
        let hd = h / nh;
        let split = |l: &Linear| -> Result<Tensor> { Ok(linear(l, x)?.reshape((b, t, nh, hd))?.transpose(1, 2)?.contiguous()?) };
        let (q, k, v) = (split(&layer.q)?, split(&layer.k)?, split(&layer.v)?);
        let scores = (q.matmul(&k.t()?)? / (hd as f64).sqrt())?.broadcast_add(bias)?;
        let probs = softmax_last(&scores)?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.reshape((b, t, h))?;
        linear(&layer.o, &ctx)
    }

    /// First-position hidden state, `[B, H]`.
    pub fn features(&self, ids: &Tensor, mask: &Tensor, dropout: Option<&Dropout>) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        if t > self.config.max_positions {
            return Err(TrainError::Config(format!("sequence length {t} exceeds {} positions", self.config.max_positions)));
        }
        let h = self.config.hidden_size;
        let p = self.config.dropout;
        let mut x = self.word.index_select(&ids.flatten_all()?, 0)?.reshape((b, t, h))?;
        x = x.broadcast_add(&self.position.narrow(0, 0, t)?)?;
        if let Some(tt) = &self.token_type {
            x = x.broadcast_add(&tt.narrow(0, 0, 1)?)?;
        }
        x = maybe_dropout(self.emb_norm.forward(&x)?, dropout, p)?;
        let bias = padding_bias(mask)?;
        for layer in &self.layers {
            let attn = maybe_dropout(self.attention(layer, &x, &bias)?, dropout, p)?;
            x = layer.attn_norm.forward(&(attn + &x)?)?;
            let ffn = self.config.activation.apply(&linear(&layer.ffn_in, &x)?)?;
            let ffn = maybe_dropout(linear(&layer.ffn_out, &ffn)?, dropout, p)?;
            x = layer.out_norm.forward(&(ffn + &x)?)?;
        }
        Ok(x.narrow(1, 0, 1)?.squeeze(1)?)
    }

    pub fn forward(&self, ids: &Tensor, mask: &Tensor, dropout: Option<&Dropout>) -> Result<Tensor> {
        let features = self.features(ids, mask, dropout)?;
        self.head.forward(&features, dropout)
    }
}
