//! Finite-difference check of classification-head gradients over frozen
//! body features.

use candle_core::{DType, Tensor, Var};
use elicit_core::encode::EncodedExample;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::head::ClassificationHead;
use crate::model::Model;
use crate::nn::{ParamFactory, Source};
use crate::predict::batch_tensors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub worst_parameter: String,
}

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn loss(head: &ClassificationHead, features: &Tensor, targets: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::loss::cross_entropy(&head.forward(features, None)?, targets)?)
}

fn set_elem(var: &Var, values: &mut [f64], i: usize, v: f64) -> Result<()> {
    values[i] = v;
    var.set(&Tensor::from_slice(values, var.shape(), var.device())?)?;
    Ok(())
}

/// Builds a probe head of width `inner` in f64 on the model's frozen
/// features for `batch`, then compares its analytic gradients with
/// central differences. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn head_gradient_check(model: &Model, batch: &[&EncodedExample], inner: usize, seed: u64) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(TrainError::Data("gradient check needs at least one example".into()));
    }
    let (ids, mask) = batch_tensors(batch)?;
    let features = model.features(&ids, &mask)?.detach().to_dtype(DType::F64)?;
    let targets: Vec<u32> = batch.iter().map(|e| e.label_id.unwrap_or(0) as u32).collect();
    let targets = Tensor::from_vec(targets, batch.len(), &candle_core::Device::Cpu)?;

    let mut f = ParamFactory::new(Source::Fresh, seed, DType::F64);
    let head = ClassificationHead::build_probe(&mut f, features.dim(1)?, inner, 0.5)?;
    let grads = loss(&head, &features, &targets)?.backward()?;

    let mut vars: Vec<(String, Var)> = f.varmap.data().lock().expect("varmap lock").clone().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    let mut report = GradCheckReport { parameters: 0, max_relative_error: 0.0, worst_parameter: String::new() };
    for (name, var) in &vars {
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .ok_or_else(|| TrainError::Data(format!("no gradient for `{name}`")))?
            .flatten_all()?
            .to_vec1()?;
        let mut values: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = values[i];
            set_elem(var, &mut values, i, orig + STEP)?;
            let up = loss(&head, &features, &targets)?.to_scalar::<f64>()?;
            set_elem(var, &mut values, i, orig - STEP)?;
            let down = loss(&head, &features, &targets)?.to_scalar::<f64>()?;
            set_elem(var, &mut values, i, orig)?;
            let numeric = (up - down) / (2.0 * STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = format!("{name}[{i}]");
            }
            report.parameters += 1;
        }
    }
    Ok(report)
}
