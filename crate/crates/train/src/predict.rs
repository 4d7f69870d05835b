use candle_core::{DType, Device, Tensor};
use elicit_core::encode::EncodedExample;

use crate::error::{Result, TrainError};
use crate::model::Model;

pub const PREDICT_BATCH: usize = 32;

/// Id and mask tensors for a batch, trimmed to the longest attended prefix.
pub(crate) fn batch_tensors(examples: &[&EncodedExample]) -> Result<(Tensor, Tensor)> {
    let width = examples.iter().map(|e| e.real_len()).max().unwrap_or(1).max(1);
    let mut ids = Vec::with_capacity(examples.len() * width);
    let mut mask = Vec::with_capacity(examples.len() * width);
    for e in examples {
        if e.token_ids.len() < width || e.attention_mask.len() < width {
            return Err(TrainError::Data("example shorter than its attention mask".into()));
        }
        ids.extend_from_slice(&e.token_ids[..width]);
        mask.extend(e.attention_mask[..width].iter().map(|&m| m as f32));
    }
    let device = Device::Cpu;
    Ok((Tensor::from_vec(ids, (examples.len(), width), &device)?, Tensor::from_vec(mask, (examples.len(), width), &device)?))
}

pub(crate) fn check_ids(model: &Model, examples: &[&EncodedExample]) -> Result<()> {
    let vocab = model.architecture().vocab_size() as u32;
    for e in examples {
        if let Some(&bad) = e.token_ids.iter().find(|&&id| id >= vocab) {
            return Err(TrainError::Data(format!("token id {bad} is outside the model vocabulary of {vocab}")));
        }
    }
    Ok(())
}

/// Probability of the useful label for each example, in input order.
pub fn predict_scores(model: &Model, examples: &[&EncodedExample]) -> Result<Vec<f64>> {
    check_ids(model, examples)?;
    let mut scores = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(PREDICT_BATCH) {
        let (ids, mask) = batch_tensors(chunk)?;
        let logits = model.forward(&ids, &mask, None)?.to_dtype(DType::F64)?;
        let rows: Vec<Vec<f64>> = logits.to_vec2()?;
        for row in rows {
            // two-way softmax, stable form
            let (n, u) = (row[0], row[1]);
            let p = 1.0 / (1.0 + (n - u).exp());
            scores.push(p);
        }
    }
    Ok(scores)
}
