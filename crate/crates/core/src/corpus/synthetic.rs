//! Generated review corpora whose labels follow from keywords, for tests,
//! demos and smoke runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Label, ReviewRecord};

const APPS: [&str; 4] = ["PhotoShare", "QuickNotes", "TrailRunner", "BudgetBee"];

/// Every useful review contains at least one of these.
pub const USEFUL_KEYWORDS: [&str; 10] =
    ["crashes", "freezes", "error", "bug", "fails", "slow", "please add", "missing", "broken", "cannot"];

const USEFUL_OPENERS: [&str; 6] = [
    "The app",
    "Since the last update it",
    "Every time I open the camera it",
    "After login the screen",
    "Sync",
    "The export button",
];

const USEFUL_DETAILS: [&str; 6] = [
    "when I upload a photo",
    "on my tablet",
    "after I change the settings",
    "while syncing with the cloud",
    "if the battery saver is on",
    "in dark mode",
];

const PRAISE: [&str; 10] = [
    "Love it",
    "Great app",
    "Awesome",
    "Nice",
    "Five stars",
    "Best app ever",
    "Really good",
    "So cool",
    "Amazing work",
    "Very happy",
];

const FILLER: [&str; 5] = ["thanks!", "keep it up", ":)", "wow", "highly recommend"];

/// `n` reviews alternating useful and not useful, deterministic in `seed`.
pub fn keyword_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let app = APPS[i % APPS.len()];
        let (text, label, rating) = if i % 2 == 0 {
            let keyword = USEFUL_KEYWORDS.choose(&mut rng).expect("non-empty");
            let opener = USEFUL_OPENERS.choose(&mut rng).expect("non-empty");
            let detail = USEFUL_DETAILS.choose(&mut rng).expect("non-empty");
            let text = if keyword.starts_with("please") || *keyword == "missing" {
                format!("{opener} works but {keyword} an offline mode {detail}")
            } else {
                format!("{opener} {keyword} {detail}")
            };
            (text, Label::Useful, rng.random_range(1..=3))
        } else {
            let praise = PRAISE.choose(&mut rng).expect("non-empty");
            let filler = FILLER.choose(&mut rng).expect("non-empty");
            (format!("{praise} {filler}"), Label::NotUseful, rng.random_range(4..=5))
        };
        records.push(ReviewRecord::new(app, format!("user{i:04}"), rating, text, Some(label)));
    }
    Corpus::new(format!("keyword-{n}-{seed}"), "synthetic", records).expect("generated records are valid")
}
