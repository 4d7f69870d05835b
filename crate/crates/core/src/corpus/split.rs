use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions { train_fraction: 0.7, seed: 42, stratify: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Corpus,
    pub test: Corpus,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Chooses training indices for `labels`.
///
/// With `stratify`, each class contributes `round(fraction * class_size)`
/// members; otherwise the whole set is shuffled once and
/// `round(fraction * n)` members are taken. Returned mask is `true` for
/// training positions. `None` labels are only allowed without stratification.
pub fn split_indices(labels: &[Option<Label>], train_fraction: f64, seed: u64, stratify: bool) -> Result<Vec<bool>, usize> {
    let mut groups: Vec<Vec<usize>> = if stratify {
        let mut by_class = vec![Vec::new(); Label::ALL.len()];
        for (i, label) in labels.iter().enumerate() {
            let label = label.ok_or(i)?;
            let slot = Label::ALL.iter().position(|l| *l == label).expect("known label");
            by_class[slot].push(i);
        }
        by_class
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; labels.len()];
    for group in &mut groups {
        group.shuffle(&mut rng);
        let take = (train_fraction * group.len() as f64).round() as usize;
        for &i in &group[..take.min(group.len())] {
            mask[i] = true;
        }
    }
    Ok(mask)
}

/// Deterministic train/test partition. Both halves keep the corpus order.
pub fn split(corpus: &Corpus, options: SplitOptions) -> Result<SplitResult, CorpusError> {
    let SplitOptions { train_fraction, seed, stratify } = options;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::Argument(format!("train fraction must lie strictly between 0 and 1, got {train_fraction}")));
    }
    let labels: Vec<Option<Label>> = corpus.iter().map(|r| r.target_variable).collect();
    let mask = split_indices(&labels, train_fraction, seed, stratify)
        .map_err(|i| CorpusError::Unlabeled(corpus.records()[i].record_id.clone()))?;

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (record, in_train) in corpus.iter().zip(&mask) {
        if *in_train {
            train.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    let make = |suffix: &str, records| Corpus {
        name: format!("{}-{suffix}", corpus.name()),
        provenance: format!("split of {} (fraction {train_fraction}, seed {seed})", corpus.name()),
        records,
    };
    Ok(SplitResult { train: make("train", train), test: make("test", test), seed, train_fraction })
}
