//! Evaluation suite: confusion matrix, accuracy, precision, recall and F1.
//!
//! Values are computed as exact ratios and only converted to `f64` for
//! reports. A metric whose denominator is zero is undefined (`None`), never
//! silently zero. `useful` is the positive class.
//!
//! Averaging modes:
//! - positive class: metrics of `useful` alone
//! - macro: unweighted mean over classes present in the gold labels or predictions
//! - weighted: mean over classes present in the gold labels, weighted by support
//!
//! In every mode F1 is the harmonic mean of that mode's precision and recall.

mod table;

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, ReviewRecord};
use crate::prediction::Prediction;

pub use table::{compare, format_percent, ComparisonRow, ComparisonTable, PlotGroup, ReferenceTable, UNDEFINED_CELL};

pub type Exact = Ratio<u128>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("prediction for unknown record {0}")]
    UnknownRecord(String),
    #[error("duplicate prediction for record {0}")]
    DuplicatePrediction(String),
    #[error("gold record {0} has no label")]
    UnlabeledGold(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    /// Counts `(predicted, gold)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (pred, gold) in pairs {
            match (pred, gold) {
                (Label::Useful, Label::Useful) => m.tp += 1,
                (Label::Useful, Label::NotUseful) => m.fp += 1,
                (Label::NotUseful, Label::Useful) => m.fn_ += 1,
                (Label::NotUseful, Label::NotUseful) => m.tn += 1,
            }
        }
        m
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same matrix with `not_useful` as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    /// `(true positives, false positives, false negatives)` from `label`'s point of view.
    fn counts_for(&self, label: Label) -> (u64, u64, u64) {
        match label {
            Label::Useful => (self.tp, self.fp, self.fn_),
            Label::NotUseful => (self.tn, self.fn_, self.fp),
        }
    }
}

/// Aligns predictions with gold records by `record_id`.
pub fn confusion(predictions: &[Prediction], gold: &[ReviewRecord]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    let mut labels = HashMap::with_capacity(gold.len());
    for record in gold {
        let label = record.target_variable.ok_or_else(|| MetricsError::UnlabeledGold(record.record_id.to_string()))?;
        labels.insert(record.record_id.as_str(), (label, false));
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    for p in predictions {
        let entry = labels.get_mut(p.record_id.as_str()).ok_or_else(|| MetricsError::UnknownRecord(p.record_id.to_string()))?;
        if entry.1 {
            return Err(MetricsError::DuplicatePrediction(p.record_id.to_string()));
        }
        entry.1 = true;
        pairs.push((p.predicted_label, entry.0));
    }
    Ok(ConfusionMatrix::from_pairs(pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    PositiveClass,
    #[default]
    Macro,
    Weighted,
}

impl Averaging {
    pub const ALL: [Averaging; 3] = [Averaging::PositiveClass, Averaging::Macro, Averaging::Weighted];

    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::PositiveClass => "positive_class",
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive_class" | "positive" | "binary" => Ok(Averaging::PositiveClass),
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(format!("unknown averaging mode `{other}`")),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<Exact> {
    (den != 0).then(|| Exact::new(num as u128, den as u128))
}

fn harmonic(p: Option<Exact>, r: Option<Exact>) -> Option<Exact> {
    let (p, r) = (p?, r?);
    let sum = p + r;
    if sum.is_zero() {
        None
    } else {
        Some(Exact::from_integer(2) * p * r / sum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassMetrics {
    pub precision: Option<Exact>,
    pub recall: Option<Exact>,
    /// Gold-label count of the class.
    pub support: u64,
    /// Predicted count of the class.
    pub predicted: u64,
}

pub fn class_metrics(m: &ConfusionMatrix, label: Label) -> ClassMetrics {
    let (tp, fp, fn_) = m.counts_for(label);
    ClassMetrics { precision: ratio(tp, tp + fp), recall: ratio(tp, tp + fn_), support: tp + fn_, predicted: tp + fp }
}

pub fn exact_to_f64(r: &Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactMetrics {
    pub accuracy: Option<Exact>,
    pub precision: Option<Exact>,
    pub recall: Option<Exact>,
    pub f1: Option<Exact>,
}

impl ExactMetrics {
    pub fn to_f64(&self) -> MetricSet {
        let f = |v: Option<Exact>| v.map(|r| exact_to_f64(&r));
        MetricSet { accuracy: f(self.accuracy), precision: f(self.precision), recall: f(self.recall), f1: f(self.f1) }
    }
}

/// Mean of `values` weighted by `weights`; undefined if any weighted value is.
fn weighted_mean(values: &[(Option<Exact>, u64)]) -> Option<Exact> {
    let total: u64 = values.iter().map(|(_, w)| *w).sum();
    if total == 0 {
        return None;
    }
    let mut acc = Exact::zero();
    for (v, w) in values {
        acc += (*v)? * Exact::from_integer(*w as u128);
    }
    Some(acc / Exact::from_integer(total as u128))
}

pub fn compute(m: &ConfusionMatrix, mode: Averaging) -> ExactMetrics {
    let accuracy = ratio(m.tp + m.tn, m.n());
    let classes: Vec<ClassMetrics> = Label::ALL.iter().map(|&l| class_metrics(m, l)).collect();
    let (precision, recall) = match mode {
        Averaging::PositiveClass => (classes[0].precision, classes[0].recall),
        Averaging::Macro => {
            let present: Vec<&ClassMetrics> = classes.iter().filter(|c| c.support > 0 || c.predicted > 0).collect();
            let p: Vec<(Option<Exact>, u64)> = present.iter().map(|c| (c.precision, 1)).collect();
            let r: Vec<(Option<Exact>, u64)> = present.iter().map(|c| (c.recall, 1)).collect();
            (weighted_mean(&p), weighted_mean(&r))
        }
        Averaging::Weighted => {
            let present: Vec<&ClassMetrics> = classes.iter().filter(|c| c.support > 0).collect();
            let p: Vec<(Option<Exact>, u64)> = present.iter().map(|c| (c.precision, c.support)).collect();
            let r: Vec<(Option<Exact>, u64)> = present.iter().map(|c| (c.recall, c.support)).collect();
            (weighted_mean(&p), weighted_mean(&r))
        }
    };
    ExactMetrics { accuracy, precision, recall, f1: harmonic(precision, recall) }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricSet {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub n: u64,
    pub confusion: ConfusionMatrix,
    pub positive_class: MetricSet,
    #[serde(rename = "macro")]
    pub macro_avg: MetricSet,
    pub weighted: MetricSet,
    pub headline: Averaging,
}

impl EvalReport {
    pub fn new(model_name: impl Into<String>, confusion: ConfusionMatrix) -> Self {
        EvalReport {
            model_name: model_name.into(),
            n: confusion.n(),
            confusion,
            positive_class: compute(&confusion, Averaging::PositiveClass).to_f64(),
            macro_avg: compute(&confusion, Averaging::Macro).to_f64(),
            weighted: compute(&confusion, Averaging::Weighted).to_f64(),
            headline: Averaging::Macro,
        }
    }

    pub fn metrics(&self, mode: Averaging) -> &MetricSet {
        match mode {
            Averaging::PositiveClass => &self.positive_class,
            Averaging::Macro => &self.macro_avg,
            Averaging::Weighted => &self.weighted,
        }
    }

    pub fn headline_metrics(&self) -> &MetricSet {
        self.metrics(self.headline)
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.positive_class.accuracy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RecordId;

    fn q(n: u128, d: u128) -> Option<Exact> {
        Some(Exact::new(n, d))
    }

    #[test]
    fn enumeration_example() {
        use Label::*;
        let m = ConfusionMatrix::from_pairs([(Useful, Useful), (Useful, NotUseful), (NotUseful, NotUseful)]);
        assert_eq!(m, ConfusionMatrix::new(1, 1, 0, 1));
        assert_eq!(ConfusionMatrix::from_pairs([]), ConfusionMatrix::default());
    }

    #[test]
    fn hand_derived_positive_class() {
        let m = ConfusionMatrix::new(3, 1, 2, 4);
        let e = compute(&m, Averaging::PositiveClass);
        assert_eq!(e.accuracy, q(7, 10));
        assert_eq!(e.precision, q(3, 4));
        assert_eq!(e.recall, q(3, 5));
        assert_eq!(e.f1, q(2, 3));
        let f = e.to_f64();
        assert!((f.f1.unwrap() - 0.6667).abs() < 5e-5);
    }

    #[test]
    fn hand_derived_macro_and_weighted() {
        // useful: P=3/4 R=3/5; not_useful: P=4/6 R=4/5; supports 5 and 5
        let m = ConfusionMatrix::new(3, 1, 2, 4);
        let mac = compute(&m, Averaging::Macro);
        assert_eq!(mac.precision, q(17, 24));
        assert_eq!(mac.recall, q(7, 10));
        let w = compute(&m, Averaging::Weighted);
        assert_eq!(w.recall, w.accuracy);
        assert_eq!(w.precision, q(17, 24));
    }

    #[test]
    fn perfect_classifier() {
        for m in [ConfusionMatrix::new(4, 0, 0, 6), ConfusionMatrix::new(1, 0, 0, 0)] {
            for mode in Averaging::ALL {
                let e = compute(&m, mode);
                for v in [e.accuracy, e.precision, e.recall, e.f1] {
                    assert_eq!(v, q(1, 1), "{mode} {m:?}");
                }
            }
        }
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = ConfusionMatrix::new(0, 0, 3, 2);
        let e = compute(&m, Averaging::PositiveClass);
        assert_eq!(e.precision, None);
        assert_eq!(e.recall, q(0, 1));
        assert_eq!(e.f1, None);
        assert_eq!(compute(&ConfusionMatrix::default(), Averaging::Macro).accuracy, None);
    }

    #[test]
    fn confusion_aligns_by_id() {
        let gold = vec![
            ReviewRecord::new("A", "1", 3, "a", Some(Label::Useful)),
            ReviewRecord::new("A", "2", 3, "b", Some(Label::NotUseful)),
            ReviewRecord::new("A", "3", 3, "c", Some(Label::NotUseful)),
        ];
        let pred = |i: usize, l| Prediction { record_id: gold[i].record_id.clone(), predicted_label: l, score: 0.5 };
        // order differs from gold on purpose
        let preds = vec![pred(2, Label::NotUseful), pred(0, Label::Useful), pred(1, Label::Useful)];
        assert_eq!(confusion(&preds, &gold).unwrap(), ConfusionMatrix::new(1, 1, 0, 1));

        assert!(matches!(confusion(&preds[..2], &gold), Err(MetricsError::LengthMismatch { .. })));
        let mut bad = preds.clone();
        bad[0].record_id = RecordId::new("zzz");
        assert!(matches!(confusion(&bad, &gold), Err(MetricsError::UnknownRecord(_))));
        let dup = vec![pred(0, Label::Useful), pred(0, Label::Useful), pred(1, Label::Useful)];
        assert!(matches!(confusion(&dup, &gold), Err(MetricsError::DuplicatePrediction(_))));
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
    }

    #[test]
    fn report_serializes_fn_key() {
        let r = EvalReport::new("m", ConfusionMatrix::new(1, 2, 3, 4));
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["confusion"]["fn"], 3);
        assert_eq!(v["headline"], "macro");
        let back: EvalReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
