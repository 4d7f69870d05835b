use serde::{Deserialize, Serialize};

use crate::corpus::{Label, RecordId};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Model output for one record. `score` is the probability of `useful`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: RecordId,
    pub predicted_label: Label,
    pub score: f64,
}

impl Prediction {
    /// `useful` exactly when `score >= threshold`. Scores are clamped to [0,1].
    pub fn from_score(record_id: RecordId, score: f64, threshold: f64) -> Self {
        let score = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
        let predicted_label = if score >= threshold { Label::Useful } else { Label::NotUseful };
        Prediction { record_id, predicted_label, score }
    }

    /// Distance from the decision boundary, 0 = maximally uncertain.
    pub fn confidence(&self) -> f64 {
        (self.score - 0.5).abs() * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_semantics() {
        let id = RecordId::new("x");
        assert_eq!(Prediction::from_score(id.clone(), 0.5, 0.5).predicted_label, Label::Useful);
        assert_eq!(Prediction::from_score(id.clone(), 0.49, 0.5).predicted_label, Label::NotUseful);
        assert_eq!(Prediction::from_score(id.clone(), 0.999, 1.0).predicted_label, Label::NotUseful);
        assert_eq!(Prediction::from_score(id, 1.7, 0.5).score, 1.0);
    }
}
