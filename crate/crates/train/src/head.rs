use candle_core::Tensor;
use candle_nn::Linear;

use crate::error::Result;
use crate::nn::{linear, maybe_dropout, Dropout, ParamFactory};

pub const NUM_LABELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadActivation {
    Tanh,
    Relu,
}

/// Optional dense projection with activation, then a linear map to label logits.
#[derive(Debug, Clone)]
pub struct ClassificationHead {
    dense: Option<(Linear, HeadActivation)>,
    out: Linear,
    dropout: f64,
}

impl ClassificationHead {
    pub(crate) fn build(
        f: &mut ParamFactory,
        dense: Option<(&str, HeadActivation)>,
        out_prefix: &str,
        input: usize,
        std: f64,
        dropout: f64,
    ) -> Result<Self> {
        let dense = match dense {
            Some((prefix, act)) => Some((f.linear(prefix, input, input, std)?, act)),
            None => None,
        };
        let out = f.linear(out_prefix, input, NUM_LABELS, std)?;
        Ok(ClassificationHead { dense, out, dropout })
    }

    /// Head over a narrower inner width, as used by the gradient probe.
    pub(crate) fn build_probe(f: &mut ParamFactory, input: usize, inner: usize, std: f64) -> Result<Self> {
        let dense = f.linear("probe.dense", input, inner, std)?;
        let out = f.linear("probe.out", inner, NUM_LABELS, std)?;
        Ok(ClassificationHead { dense: Some((dense, HeadActivation::Tanh)), out, dropout: 0.0 })
    }

    pub fn forward(&self, features: &Tensor, dropout: Option<&Dropout>) -> Result<Tensor> {
        let mut x = features.clone();
        if let Some((dense, act)) = &self.dense {
            let y = linear(dense, &x)?;
            x = match act {
                HeadActivation::Tanh => y.tanh()?,
                HeadActivation::Relu => y.relu()?,
            };
        }
        let x = maybe_dropout(x, dropout, self.dropout)?;
        linear(&self.out, &x)
    }
}
