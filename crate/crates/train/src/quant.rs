//! Blockwise absmax quantization of frozen weights.

use candle_core::{Device, Tensor};

use crate::error::{Result, TrainError};

pub const BLOCK_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub bits: u8,
    pub shape: Vec<usize>,
    /// 8-bit: one offset code per value. 4-bit: two per byte, low nibble first.
    pub codes: Vec<u8>,
    /// Absolute maximum of each block.
    pub scales: Vec<f32>,
}

fn levels(bits: u8) -> f32 {
    match bits {
        8 => 127.0,
        _ => 7.0,
    }
}

impl QuantizedTensor {
    pub fn quantize(values: &[f32], shape: &[usize], bits: u8) -> Result<Self> {
        if bits != 8 && bits != 4 {
            return Err(TrainError::Config(format!("unsupported quantization width {bits}")));
        }
        let lv = levels(bits);
        let offset = lv + 1.0;
        let mut scales = Vec::with_capacity(values.len().div_ceil(BLOCK_SIZE));
        let mut q = Vec::with_capacity(values.len());
        for block in values.chunks(BLOCK_SIZE) {
            let absmax = block.iter().fold(0f32, |m, v| m.max(v.abs()));
            scales.push(absmax);
            for v in block {
                let code = if absmax > 0.0 { (v / absmax * lv).round().clamp(-lv, lv) } else { 0.0 };
                q.push((code + offset) as u8);
            }
        }
        let codes = if bits == 8 { q } else { q.chunks(2).map(|p| p[0] | (p.get(1).copied().unwrap_or(8) << 4)).collect() };
        Ok(QuantizedTensor { bits, shape: shape.to_vec(), codes, scales })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dequantize(&self) -> Vec<f32> {
        let lv = levels(self.bits);
        let offset = lv + 1.0;
        let n = self.len();
        (0..n)
            .map(|i| {
                let raw = if self.bits == 8 {
                    self.codes[i]
                } else {
                    let byte = self.codes[i / 2];
                    if i % 2 == 0 {
                        byte & 0x0f
                    } else {
                        byte >> 4
                    }
                };
                (raw as f32 - offset) / lv * self.scales[i / BLOCK_SIZE]
            })
            .collect()
    }

    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.dequantize(), self.shape.as_slice(), device)?)
    }

    pub fn codes_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.codes.clone(), self.codes.len(), device)?)
    }

    pub fn scales_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.scales.clone(), self.scales.len(), device)?)
    }

    pub fn from_tensors(bits: u8, shape: &[usize], codes: &Tensor, scales: &Tensor) -> Result<Self> {
        let q = QuantizedTensor {
            bits,
            shape: shape.to_vec(),
            codes: codes.flatten_all()?.to_vec1::<u8>()?,
            scales: scales.flatten_all()?.to_vec1::<f32>()?,
        };
        let n = q.len();
        let want_codes = if bits == 8 { n } else { n.div_ceil(2) };
        if q.codes.len() != want_codes || q.scales.len() != n.div_ceil(BLOCK_SIZE) {
            return Err(TrainError::Data(format!("quantized tensor of shape {shape:?} has inconsistent storage")));
        }
        Ok(q)
    }

    /// Bytes of every stored component, for fingerprinting.
    pub fn stored_bytes(&self) -> Vec<u8> {
        let mut out = self.codes.clone();
        for s in &self.scales {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}
