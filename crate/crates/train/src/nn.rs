//! Differentiable building blocks and a seeded parameter factory.
//!
//! Everything here is written with primitive tensor ops so gradients reach
//! every parameter; fused kernels in candle-nn stop the backward pass.

use std::cell::RefCell;
use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::{Linear, Module, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Normal(f64),
    Uniform(f64),
    Zeros,
    Ones,
}

/// Where parameter values come from when a model is built.
pub(crate) enum Source {
    /// Every parameter drawn from its init distribution.
    Fresh,
    /// Every parameter must be present with the right shape.
    Strict(HashMap<String, Tensor>),
    /// Parameters matching `optional` may fall back to init; others must exist.
    Partial { tensors: HashMap<String, Tensor>, optional: fn(&str) -> bool },
}

/// Creates named parameters in construction order. Trainable ones become
/// [`Var`]s in `varmap`; frozen ones are plain tensors the caller keeps.
pub(crate) struct ParamFactory {
    pub device: Device,
    pub dtype: DType,
    rng: ChaCha8Rng,
    source: Source,
    pub varmap: VarMap,
    pub loaded: Vec<String>,
    pub initialized: Vec<String>,
}

impl ParamFactory {
    pub fn new(source: Source, seed: u64, dtype: DType) -> Self {
        ParamFactory {
            device: Device::Cpu,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
            source,
            varmap: VarMap::new(),
            loaded: Vec::new(),
            initialized: Vec::new(),
        }
    }

    pub fn sample(&mut self, shape: &[usize], init: Init) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).map_err(|e| TrainError::Config(e.to_string()))?;
                (0..n).map(|_| dist.sample(&mut self.rng)).collect()
            }
            Init::Uniform(bound) => (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect(),
        };
        Ok(Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    /// Removes and returns a raw tensor from the source, without shape checks.
    pub fn take_raw(&mut self, name: &str) -> Option<Tensor> {
        match &mut self.source {
            Source::Fresh => None,
            Source::Strict(t) | Source::Partial { tensors: t, .. } => t.remove(name),
        }
    }

    pub fn has_source(&self) -> bool {
        !matches!(self.source, Source::Fresh)
    }

    fn resolve(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let optional = match &self.source {
            Source::Fresh => None,
            Source::Strict(_) => Some(false),
            Source::Partial { optional, .. } => Some(optional(name)),
        };
        let Some(optional) = optional else {
            // Fresh: sample even when a source tensor is absent on purpose.
            self.initialized.push(name.to_string());
            return self.sample(shape, init);
        };
        match self.take_raw(name) {
            Some(t) if t.dims() == shape => {
                self.loaded.push(name.to_string());
                Ok(t.to_dtype(self.dtype)?)
            }
            found => {
                if optional {
                    if let Some(t) = found {
                        log::warn!("`{name}` has shape {:?}, expected {shape:?}; reinitializing", t.dims());
                    }
                    self.initialized.push(name.to_string());
                    self.sample(shape, init)
                } else {
                    Err(TrainError::Data(match found {
                        Some(t) => format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.dims()),
                        None => format!("missing tensor `{name}`"),
                    }))
                }
            }
        }
    }

    pub fn trainable(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let value = self.resolve(name, shape, init)?;
        let var = Var::from_tensor(&value)?;
        let tensor = var.as_tensor().clone();
        self.varmap.data().lock().expect("varmap lock").insert(name.to_string(), var);
        Ok(tensor)
    }

    pub fn frozen(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        self.resolve(name, shape, init)
    }

    pub fn linear(&mut self, prefix: &str, input: usize, output: usize, std: f64) -> Result<Linear> {
        let w = self.trainable(&format!("{prefix}.weight"), &[output, input], Init::Normal(std))?;
        let b = self.trainable(&format!("{prefix}.bias"), &[output], Init::Zeros)?;
        Ok(Linear::new(w, Some(b)))
    }

    pub fn layer_norm(&mut self, prefix: &str, size: usize, eps: f64) -> Result<LayerNorm> {
        Ok(LayerNorm {
            weight: self.trainable(&format!("{prefix}.weight"), &[size], Init::Ones)?,
            bias: self.trainable(&format!("{prefix}.bias"), &[size], Init::Zeros)?,
            eps,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

/// Root-mean-square norm scaling by `1 + weight`.
#[derive(Debug, Clone)]
pub(crate) struct OffsetRmsNorm {
    pub weight: Tensor,
    pub eps: f64,
}

impl OffsetRmsNorm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let ms = x.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = x.broadcast_div(&(ms + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&(&self.weight + 1.0)?)?)
    }
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let num = x.broadcast_sub(&max)?.exp()?;
    let den = num.sum_keepdim(D::Minus1)?;
    Ok(num.broadcast_div(&den)?)
}

pub(crate) fn linear(layer: &Linear, x: &Tensor) -> Result<Tensor> {
    Ok(layer.forward(x)?)
}

/// Additive attention bias of shape `[B,1,1,T]`: zero where attended, a large
/// negative value at padding.
pub(crate) fn padding_bias(mask: &Tensor) -> Result<Tensor> {
    let (b, t) = mask.dims2()?;
    let bias = ((mask.to_dtype(DType::F32)? - 1.0)? * 1e9)?;
    Ok(bias.reshape((b, 1, 1, t))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    GeluTanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Activation::Gelu => x.gelu_erf()?,
            Activation::GeluTanh => x.gelu()?,
            Activation::Relu => x.relu()?,
        })
    }

    pub(crate) fn from_hf(name: &str) -> Option<Self> {
        match name {
            "gelu" => Some(Activation::Gelu),
            "gelu_new" | "gelu_pytorch_tanh" | "gelu_fast" => Some(Activation::GeluTanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Seeded inverted dropout used only while training.
pub struct Dropout {
    rng: RefCell<ChaCha8Rng>,
}

impl Dropout {
    pub fn new(seed: u64) -> Self {
        Dropout { rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub(crate) fn apply(&self, x: &Tensor, p: f64) -> Result<Tensor> {
        if p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - p;
        let scale = (1.0 / keep) as f32;
        let n = x.elem_count();
        let mut rng = self.rng.borrow_mut();
        let mask: Vec<f32> = (0..n).map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 }).collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok((x * mask)?)
    }
}

pub(crate) fn maybe_dropout(x: Tensor, dropout: Option<&Dropout>, p: f64) -> Result<Tensor> {
    match dropout {
        Some(d) => d.apply(&x, p),
        None => Ok(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32], shape: &[usize]) -> Tensor {
        Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn layer_norm_matches_formula() {
        let ln = LayerNorm { weight: t(&[1.0, 1.0, 1.0], &[3]), bias: t(&[0.0, 0.0, 0.0], &[3]), eps: 0.0 };
        let out: Vec<f32> = ln.forward(&t(&[1.0, 2.0, 3.0], &[1, 3])).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let s = (2.0f32 / 3.0).sqrt();
        for (o, e) in out.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((o - e).abs() < 1e-5);
        }
    }

    #[test]
    fn layer_norm_backward_reaches_weight() {
        let w = Var::from_tensor(&t(&[1.0, 1.0], &[2])).unwrap();
        let ln = LayerNorm { weight: w.as_tensor().clone(), bias: t(&[0.0, 0.0], &[2]), eps: 1e-5 };
        let y = ln.forward(&t(&[1.0, 3.0], &[1, 2])).unwrap();
        let loss = (y * t(&[1.0, 2.0], &[1, 2])).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(&w).is_some());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = softmax_last(&t(&[1.0, 2.0, 3.0, -1e9, 0.0, 0.0], &[2, 3])).unwrap();
        let sums: Vec<f32> = s.sum(1).unwrap().to_vec1().unwrap();
        assert!(sums.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn factory_is_seeded() {
        let draw = |seed| {
            let mut f = ParamFactory::new(Source::Fresh, seed, DType::F32);
            f.trainable("w", &[4], Init::Normal(0.02)).unwrap().to_vec1::<f32>().unwrap()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn strict_source_requires_every_tensor() {
        let mut f = ParamFactory::new(Source::Strict(HashMap::new()), 0, DType::F32);
        assert!(f.trainable("missing", &[2], Init::Zeros).is_err());
    }

    #[test]
    fn dropout_is_deterministic_and_scaled() {
        let x = Tensor::ones((1000,), DType::F32, &Device::Cpu).unwrap();
        let a: Vec<f32> = Dropout::new(3).apply(&x, 0.5).unwrap().to_vec1().unwrap();
        let b: Vec<f32> = Dropout::new(3).apply(&x, 0.5).unwrap().to_vec1().unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = a.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
