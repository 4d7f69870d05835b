//! Causal decoder in the Gemma layout: offset RMS norms, rotary positions,
//! multi-query attention and a gated tanh-GELU feed-forward. Sequence
//! classification reads the hidden state at the last real token.
//!
//! With low-rank adapters the base weights are frozen, optionally stored
//! quantized, and only the adapters and head are trained.

use candle_core::{DType, Device, Tensor};
use candle_nn::Linear;
use serde::{Deserialize, Serialize};

use crate::config::{LowRankConfig, Quantization};
use crate::error::{Result, TrainError};
use crate::head::ClassificationHead;
use crate::nn::{linear, softmax_last, Dropout, Init, OffsetRmsNorm, ParamFactory};
use crate::quant::QuantizedTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub num_kv_heads: usize,
    pub head_dim: usize,
    pub intermediate_size: usize,
    pub rope_theta: f64,
    pub rms_norm_eps: f64,
    pub max_positions: usize,
    pub initializer_range: f64,
}

impl DecoderConfig {
    /// Small randomly initialized stand-in with the same layout.
    pub fn tiny(vocab_size: usize) -> Self {
        DecoderConfig {
            vocab_size,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            num_kv_heads: 1,
            head_dim: 16,
            intermediate_size: 256,
            rope_theta: 10_000.0,
            rms_norm_eps: 1e-6,
            max_positions: 512,
            initializer_range: 0.02,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.num_kv_heads == 0 || !self.num_heads.is_multiple_of(self.num_kv_heads) {
            return Err(TrainError::Config(format!(
                "{} heads cannot share {} key/value heads",
                self.num_heads, self.num_kv_heads
            )));
        }
        if !self.head_dim.is_multiple_of(2) || self.vocab_size == 0 || self.num_layers == 0 {
            return Err(TrainError::Config("head_dim must be even; vocab and layers positive".into()));
        }
        Ok(())
    }
}

/// A frozen base weight as persisted.
#[derive(Debug, Clone)]
pub(crate) enum Stored {
    Full(Tensor),
    Quantized(QuantizedTensor),
}

impl Stored {
    pub fn bytes(&self) -> Result<Vec<u8>> {
        Ok(match self {
            Stored::Full(t) => {
                t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect()
            }
            Stored::Quantized(q) => q.stored_bytes(),
        })
    }

    pub fn elem_count(&self) -> usize {
        match self {
            Stored::Full(t) => t.elem_count(),
            Stored::Quantized(q) => q.len(),
        }
    }
}

struct AdaptedLinear {
    base: Linear,
    adapter: Option<(Tensor, Tensor, f64)>,
}

impl AdaptedLinear {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = linear(&self.base, x)?;
        match &self.adapter {
            None => Ok(y),
            Some((a, b, scale)) => {
                let delta = linear(&Linear::new(b.clone(), None), &linear(&Linear::new(a.clone(), None), x)?)?;
                Ok((y + (delta * *scale)?)?)
            }
        }
    }
}

struct DecoderLayer {
    input_norm: OffsetRmsNorm,
    q: AdaptedLinear,
    k: AdaptedLinear,
    v: AdaptedLinear,
    o: AdaptedLinear,
    post_norm: OffsetRmsNorm,
    gate: AdaptedLinear,
    up: AdaptedLinear,
    down: AdaptedLinear,
}

pub(crate) struct Decoder {
    config: DecoderConfig,
    embed: Tensor,
    layers: Vec<DecoderLayer>,
    final_norm: OffsetRmsNorm,
    pub(crate) head: ClassificationHead,
}

struct Builder<'a> {
    f: &'a mut ParamFactory,
    lora: Option<&'a LowRankConfig>,
    quantization: Quantization,
    frozen: Vec<(String, Stored)>,
}

impl Builder<'_> {
    /// Base weight that is frozen under adapters and trainable otherwise.
    fn base(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.lora.is_none() {
            return self.f.trainable(name, shape, init);
        }
        let t = self.f.frozen(name, shape, init)?;
        self.frozen.push((name.to_string(), Stored::Full(t.clone())));
        Ok(t)
    }

    fn projection(&mut self, name: &str, input: usize, output: usize, std: f64) -> Result<AdaptedLinear> {
        let wname = format!("{name}.weight");
        let shape = [output, input];
        let weight = match (self.lora, self.quantization.bits()) {
            (Some(_), Some(bits)) => {
                let codes = self.f.take_raw(&format!("{wname}.qcodes"));
                let scales = self.f.take_raw(&format!("{wname}.qscales"));
                let q = match (codes, scales) {
                    (Some(c), Some(s)) => QuantizedTensor::from_tensors(bits, &shape, &c, &s)?,
                    _ if self.f.has_source() => {
                        return Err(TrainError::Data(format!("missing quantized tensor `{wname}`")));
                    }
                    _ => {
                        let full = self.f.sample(&shape, Init::Normal(std))?;
                        QuantizedTensor::quantize(&full.flatten_all()?.to_vec1::<f32>()?, &shape, bits)?
                    }
                };
                let t = q.to_tensor(&self.f.device)?;
                self.frozen.push((wname, Stored::Quantized(q)));
                t
            }
            _ => self.base(&wname, &shape, Init::Normal(std))?,
        };
        let short = name.rsplit('.').next().unwrap_or(name);
        let adapter = match self.lora {
            Some(cfg) if cfg.target_modules.iter().any(|m| m == short) => {
                let bound = 1.0 / (input as f64).sqrt();
                let a = self.f.trainable(&format!("{name}.lora_a"), &[cfg.rank, input], Init::Uniform(bound))?;
                let b = self.f.trainable(&format!("{name}.lora_b"), &[output, cfg.rank], Init::Zeros)?;
                Some((a, b, cfg.alpha / cfg.rank as f64))
            }
            _ => None,
        };
        Ok(AdaptedLinear { base: Linear::new(weight, None), adapter })
    }

    fn norm(&mut self, name: &str, size: usize, eps: f64) -> Result<OffsetRmsNorm> {
        Ok(OffsetRmsNorm { weight: self.base(&format!("{name}.weight"), &[size], Init::Zeros)?, eps })
    }
}

impl Decoder {
    pub fn build(
        config: &DecoderConfig,
        lora: Option<&LowRankConfig>,
        quantization: Quantization,
        f: &mut ParamFactory,
    ) -> Result<(Self, Vec<(String, Stored)>)> {
        config.check()?;
        if quantization != Quantization::None && lora.is_none() {
            return Err(TrainError::Config("quantized decoder weights need low-rank adapters".into()));
        }
        let std = config.initializer_range;
        let h = config.hidden_size;
        let eps = config.rms_norm_eps;
        let q_out = config.num_heads * config.head_dim;
        let kv_out = config.num_kv_heads * config.head_dim;
        let mut b = Builder { f, lora, quantization, frozen: Vec::new() };
        let embed = b.base("model.embed_tokens.weight", &[config.vocab_size, h], Init::Normal(std))?;
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let p = format!("model.layers.{i}");
            layers.push(DecoderLayer {
                input_norm: b.norm(&format!("{p}.input_layernorm"), h, eps)?,
                q: b.projection(&format!("{p}.self_attn.q_proj"), h, q_out, std)?,
                k: b.projection(&format!("{p}.self_attn.k_proj"), h, kv_out, std)?,
                v: b.projection(&format!("{p}.self_attn.v_proj"), h, kv_out, std)?,
                o: b.projection(&format!("{p}.self_attn.o_proj"), q_out, h, std)?,
                post_norm: b.norm(&format!("{p}.post_attention_layernorm"), h, eps)?,
                gate: b.projection(&format!("{p}.mlp.gate_proj"), h, config.intermediate_size, std)?,
                up: b.projection(&format!("{p}.mlp.up_proj"), h, config.intermediate_size, std)?,
                down: b.projection(&format!("{p}.mlp.down_proj"), config.intermediate_size, h, std)?,
            });
        }
        let final_norm = b.norm("model.norm", h, eps)?;
        let frozen = std::mem::take(&mut b.frozen);
        let head = ClassificationHead::build(f, None, "score", h, std, 0.0)?;
        Ok((Decoder { config: config.clone(), embed, layers, final_norm, head }, frozen))
    }

    fn rotary(&self, t: usize, device: &Device) -> Result<(Tensor, Tensor)> {
        let hd = self.config.head_dim;
        let half = hd / 2;
        let mut cos = Vec::with_capacity(t * hd);
        let mut sin = Vec::with_capacity(t * hd);
        for pos in 0..t {
            for _ in 0..2 {
                for j in 0..half {
                    let inv = self.config.rope_theta.powf(-(2.0 * j as f64) / hd as f64);
                    let angle = pos as f64 * inv;
                    cos.push(angle.cos() as f32);
                    sin.push(angle.sin() as f32);
                }
            }
        }
        Ok((Tensor::from_vec(cos, (t, hd), device)?, Tensor::from_vec(sin, (t, hd), device)?))
    }

    fn apply_rotary(x: &Tensor, cos: &Tensor, sin: &Tensor) -> Result<Tensor> {
        let hd = x.dim(3)?;
        let x1 = x.narrow(3, 0, hd / 2)?;
        let x2 = x.narrow(3, hd / 2, hd / 2)?;
        let rotated = Tensor::cat(&[&x2.neg()?, &x1], 3)?;
        Ok((x.broadcast_mul(cos)? + rotated.broadcast_mul(sin)?)?)
    }

    /// `[B,1,T,T]` bias blocking future positions and padded keys.
    fn attention_bias(mask: &Tensor) -> Result<Tensor> {
        let (b, t) = mask.dims2()?;
        let m = mask.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        let mut bias = vec![0f32; b * t * t];
        for (bi, row) in m.iter().enumerate() {
            for i in 0..t {
                for j in 0..t {
                    if j > i || row[j] == 0.0 {
                        bias[(bi * t + i) * t + j] = -1e9;
                    }
                }
            }
        }
        Ok(Tensor::from_vec(bias, (b, 1, t, t), mask.device())?)
    }

    fn repeat_kv(&self, x: Tensor) -> Result<Tensor> {
        let n_rep = self.config.num_heads / self.config.num_kv_heads;
        if n_rep == 1 {
            return Ok(x);
        }
        let (b, nkv, t, hd) = x.dims4()?;
        Ok(x.unsqueeze(2)?.broadcast_as((b, nkv, n_rep, t, hd))?.contiguous()?.reshape((b, nkv * n_rep, t, hd))?)
    }

    /// Hidden state at each sequence's last attended position, `[B, H]`.
    pub fn features(&self, ids: &Tensor, mask: &Tensor, _dropout: Option<&Dropout>) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let cfg = &self.config;
        if t > cfg.max_positions {
            return Err(TrainError::Config(format!("sequence length {t} exceeds {} positions", cfg.max_positions)));
        }
        let h = cfg.hidden_size;
        let (nh, nkv, hd) = (cfg.num_heads, cfg.num_kv_heads, cfg.head_dim);
        let mut x = (self.embed.index_select(&ids.flatten_all()?, 0)?.reshape((b, t, h))? * (h as f64).sqrt())?;
        let (cos, sin) = self.rotary(t, ids.device())?;
        let bias = Self::attention_bias(mask)?;
        for layer in &self.layers {
            let hn = layer.input_norm.forward(&x)?;
            let heads = |l: &AdaptedLinear, n: usize| -> Result<Tensor> {
                Ok(l.forward(&hn)?.reshape((b, t, n, hd))?.transpose(1, 2)?.contiguous()?)
            };
            let q = Self::apply_rotary(&heads(&layer.q, nh)?, &cos, &sin)?;
            let k = self.repeat_kv(Self::apply_rotary(&heads(&layer.k, nkv)?, &cos, &sin)?)?;
            let v = self.repeat_kv(heads(&layer.v, nkv)?)?;
            let scores = (q.matmul(&k.t()?)? / (hd as f64).sqrt())?.broadcast_add(&bias)?;
            let ctx = softmax_last(&scores)?.matmul(&v)?.transpose(1, 2)?.reshape((b, t, nh * hd))?;
            x = (x + layer.o.forward(&ctx)?)?;
            let hn = layer.post_norm.forward(&x)?;
            let gated = (layer.gate.forward(&hn)?.gelu()? * layer.up.forward(&hn)?)?;
            x = (x + layer.down.forward(&gated)?)?;
        }
        let x = self.final_norm.forward(&x)?;
        let lengths: Vec<f32> = mask.to_dtype(DType::F32)?.sum(1)?.to_vec1()?;
        let idx: Vec<u32> = lengths.iter().enumerate().map(|(i, &len)| (i * t + (len as usize).max(1) - 1) as u32).collect();
        let idx = Tensor::from_vec(idx, b, ids.device())?;
        Ok(x.reshape((b * t, h))?.index_select(&idx, 0)?)
    }

    pub fn forward(&self, ids: &Tensor, mask: &Tensor, dropout: Option<&Dropout>) -> Result<Tensor> {
        let features = self.features(ids, mask, dropout)?;
        self.head.forward(&features, dropout)
    }
}
