use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use elicit_core::corpus::split_indices;
use elicit_core::encode::{EncodedDataset, EncodedExample};
use elicit_core::metrics::{ConfusionMatrix, EvalReport};
use elicit_core::Label;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{LrSchedule, TrainConfig};
use crate::error::{Result, TrainError};
use crate::model::{Model, ParameterCounts};
use crate::nn::Dropout;
use crate::predict::{batch_tensors, check_ids, predict_scores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Option<EvalReport>,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneResult {
    pub epochs: Vec<EpochReport>,
    /// Epoch whose weights the model holds afterwards.
    pub best_epoch: usize,
    pub parameters: ParameterCounts,
    pub steps: usize,
    pub train_size: usize,
    pub validation_size: usize,
    /// The configuration the run used.
    pub config: TrainConfig,
    pub wall_time_seconds: f64,
}

impl FineTuneResult {
    pub fn per_epoch_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn best_validation(&self) -> Option<&EvalReport> {
        self.epochs.get(self.best_epoch - 1).and_then(|e| e.validation.as_ref())
    }
}

fn learning_rate(config: &TrainConfig, step: usize, total: usize) -> f64 {
    let base = config.learning_rate;
    let warm = config.warmup_steps;
    if step < warm {
        return base * (step + 1) as f64 / warm as f64;
    }
    match config.lr_schedule {
        LrSchedule::Constant => base,
        LrSchedule::Linear => base * (total - step) as f64 / (total - warm).max(1) as f64,
    }
}

fn clip_gradients(grads: &mut candle_core::backprop::GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let coef = max_norm / (norm + 1e-6);
        for v in vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                let scaled = (g * coef)?;
                grads.insert(v.as_tensor(), scaled);
            }
        }
    }
    Ok(norm)
}

fn targets(batch: &[&EncodedExample]) -> Result<Tensor> {
    let t: Vec<u32> = batch.iter().map(|e| e.label_id.unwrap_or(0) as u32).collect();
    Ok(Tensor::from_vec(t, batch.len(), &candle_core::Device::Cpu)?)
}

/// Mean cross-entropy and the confusion matrix at `threshold`.
fn evaluate(model: &Model, rows: &[&EncodedExample], threshold: f64) -> Result<(f64, ConfusionMatrix)> {
    let scores = predict_scores(model, rows)?;
    let mut loss = 0.0;
    let mut pairs = Vec::with_capacity(rows.len());
    for (e, &p) in rows.iter().zip(&scores) {
        let gold = e.label().expect("validated labels");
        let p_gold = if gold == Label::Useful { p } else { 1.0 - p };
        loss -= p_gold.max(1e-12).ln();
        let pred = if p >= threshold { Label::Useful } else { Label::NotUseful };
        pairs.push((pred, gold));
    }
    Ok((loss / rows.len().max(1) as f64, ConfusionMatrix::from_pairs(pairs)))
}

/// Fine-tunes `model` in place and leaves it holding the best epoch's weights.
///
/// A stratified share of `train` (the validation fraction) is held out to
/// choose that epoch by accuracy; later epochs win ties. Without held-out
/// rows the last epoch is kept. `on_epoch` sees each report as it completes.
pub fn fine_tune(
    model: &mut Model,
    train: &EncodedDataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<FineTuneResult> {
    config.validate(model.kind())?;
    let started = std::time::Instant::now();
    let meta = &train.metadata;
    if meta.model_family != model.kind().family() {
        return Err(TrainError::MetadataMismatch {
            field: "model_family",
            checkpoint: model.kind().family().to_string(),
            input: meta.model_family.to_string(),
        });
    }
    if meta.max_len != config.max_len {
        return Err(TrainError::MetadataMismatch {
            field: "max_len",
            checkpoint: config.max_len.to_string(),
            input: meta.max_len.to_string(),
        });
    }
    if config.max_len > model.architecture().max_positions() {
        return Err(TrainError::Config(format!(
            "max_len {} exceeds the model's {} positions",
            config.max_len,
            model.architecture().max_positions()
        )));
    }
    if train.is_empty() {
        return Err(TrainError::Data("training set is empty".into()));
    }
    if let Some(row) = train.rows.iter().find(|r| r.example.label().is_none()) {
        return Err(TrainError::Data(format!("training row {} has no label", row.record_id)));
    }
    let all: Vec<&EncodedExample> = train.examples().collect();
    check_ids(model, &all)?;

    let labels: Vec<Option<Label>> = all.iter().map(|e| e.label()).collect();
    let (mut train_rows, mut val_rows) = (Vec::new(), Vec::new());
    if config.validation_fraction > 0.0 {
        let keep = split_indices(&labels, 1.0 - config.validation_fraction, config.seed, true)
            .map_err(|i| TrainError::Data(format!("row {i} has no label")))?;
        for (e, k) in all.iter().zip(keep) {
            if k {
                train_rows.push(*e);
            } else {
                val_rows.push(*e);
            }
        }
    } else {
        train_rows = all.clone();
    }
    if train_rows.is_empty() {
        train_rows = std::mem::take(&mut val_rows);
    }

    let vars: Vec<Var> = model.trainable_vars().into_iter().map(|(_, v)| v).collect();
    if vars.is_empty() {
        return Err(TrainError::Config("model has no trainable parameters".into()));
    }
    let mut opt = AdamW::new(
        vars.clone(),
        ParamsAdamW { lr: config.learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: config.weight_decay },
    )?;
    let steps_per_epoch = train_rows.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dropout = Dropout::new(config.seed.wrapping_add(1));

    let mut reports = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_rows.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| train_rows[i]).collect();
            let (ids, mask) = batch_tensors(&batch)?;
            let logits = model.forward(&ids, &mask, Some(&dropout))?;
            let loss = candle_nn::loss::cross_entropy(&logits, &targets(&batch)?)?;
            let value = loss.to_scalar::<f32>()? as f64;
            if !value.is_finite() {
                return Err(TrainError::Data(format!("loss became {value} at epoch {epoch}")));
            }
            loss_sum += value * batch.len() as f64;
            let mut grads = loss.backward()?;
            if let Some(max_norm) = config.grad_clip {
                clip_gradients(&mut grads, &vars, max_norm)?;
            }
            opt.set_learning_rate(learning_rate(config, step, total_steps));
            opt.step(&grads)?;
            step += 1;
        }
        let train_loss = loss_sum / train_rows.len() as f64;
        let (validation, validation_loss) = if val_rows.is_empty() {
            (None, None)
        } else {
            let (loss, m) = evaluate(model, &val_rows, config.decision_threshold)?;
            (Some(EvalReport::new("validation", m)), Some(loss))
        };
        let accuracy = validation.as_ref().and_then(|r| r.accuracy()).unwrap_or(f64::NEG_INFINITY);
        let improves = best.as_ref().is_none_or(|(_, acc, _)| accuracy >= *acc);
        if improves {
            let snapshot = vars.iter().map(|v| v.as_tensor().copy()).collect::<candle_core::Result<Vec<_>>>()?;
            best = Some((epoch, accuracy, snapshot));
        }
        let report = EpochReport { epoch, train_loss, validation, validation_loss };
        log::info!("epoch {epoch}: train loss {train_loss:.4}, validation accuracy {accuracy:.4}");
        on_epoch(&report);
        reports.push(report);
    }
    let (best_epoch, _, snapshot) = best.expect("at least one epoch");
    for (v, t) in vars.iter().zip(&snapshot) {
        v.set(t)?;
    }
    Ok(FineTuneResult {
        epochs: reports,
        best_epoch,
        parameters: model.parameter_counts(),
        steps: step,
        train_size: train_rows.len(),
        validation_size: val_rows.len(),
        config: config.clone(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_decays_to_zero() {
        let c = TrainConfig { learning_rate: 1.0, ..TrainConfig::default() };
        assert_eq!(learning_rate(&c, 0, 10), 1.0);
        assert!((learning_rate(&c, 9, 10) - 0.1).abs() < 1e-12);
        let w = TrainConfig { warmup_steps: 2, ..c.clone() };
        assert_eq!(learning_rate(&w, 0, 10), 0.5);
        let k = TrainConfig { lr_schedule: LrSchedule::Constant, ..c };
        assert_eq!(learning_rate(&k, 7, 10), 1.0);
    }
}
