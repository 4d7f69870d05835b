//! Review records and labeled/unlabeled corpora.
//!
//! A [`Corpus`] is validated on construction and immutable afterwards; every
//! transformation (filtering, splitting) builds a new corpus.

mod io;
mod split;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{sha256_fields, sha256_hex};

pub use io::{load_corpus, parse_corpus, save_corpus, to_csv_string, to_jsonl_string, Format, CSV_HEADER};
pub use split::{split, split_indices, SplitOptions, SplitResult};

/// Row-level problem found while loading or validating a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// 1-based data row (header excluded) or JSONL line.
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("{} invalid record(s): {}", .0.len(), format_issues(.0))]
    Validation(Vec<RowIssue>),
    #[error("record {0} has no label but the operation requires labels")]
    Unlabeled(RecordId),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unsupported corpus format `{0}`")]
    UnsupportedFormat(String),
}

fn format_issues(issues: &[RowIssue]) -> String {
    let shown: Vec<String> = issues.iter().take(5).map(ToString::to_string).collect();
    let mut out = shown.join("; ");
    if issues.len() > 5 {
        out.push_str(&format!("; ... {} more", issues.len() - 5));
    }
    out
}

/// Binary usefulness label. `Useful` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Useful,
    NotUseful,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Useful, Label::NotUseful];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Useful => "useful",
            Label::NotUseful => "not_useful",
        }
    }

    /// Model-facing class id: useful=1, not_useful=0.
    pub fn id(self) -> u8 {
        match self {
            Label::Useful => 1,
            Label::NotUseful => 0,
        }
    }

    pub fn from_id(id: u8) -> Option<Label> {
        match id {
            1 => Some(Label::Useful),
            0 => Some(Label::NotUseful),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Useful => Label::NotUseful,
            Label::NotUseful => Label::Useful,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    /// Accepts `useful`, `not_useful`, `not useful` and `not-useful`, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "useful" => Ok(Label::Useful),
            "not_useful" => Ok(Label::NotUseful),
            _ => Err(format!("unknown label `{}`", s.trim())),
        }
    }
}

/// Opaque record identity, by default a content hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(String);

impl RecordId {
    pub fn new(id: impl Into<String>) -> Self {
        RecordId(id.into())
    }

    /// First 16 bytes of SHA-256 over app name, username and review text.
    pub fn from_content(app_name: &str, username: &str, review_description: &str) -> Self {
        let digest = sha256_fields([app_name, username, review_description]);
        RecordId(digest[..32].to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One app-store review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    #[serde(rename = "AppName")]
    pub app_name: String,
    #[serde(rename = "Username")]
    pub username: String,
    pub app_rating_given: u8,
    pub review_description: String,
    #[serde(default)]
    pub target_variable: Option<Label>,
    pub record_id: RecordId,
    #[serde(default)]
    pub fetched_at: Option<DateTime<Utc>>,
}

impl ReviewRecord {
    /// Builds a record with a content-derived id and no fetch timestamp.
    pub fn new(
        app_name: impl Into<String>,
        username: impl Into<String>,
        rating: u8,
        review_description: impl Into<String>,
        label: Option<Label>,
    ) -> Self {
        let app_name = app_name.into();
        let username = username.into();
        let review_description = review_description.into();
        let record_id = RecordId::from_content(&app_name, &username, &review_description);
        ReviewRecord {
            app_name,
            username,
            app_rating_given: rating,
            review_description,
            target_variable: label,
            record_id,
            fetched_at: None,
        }
    }

    pub fn with_fetched_at(mut self, at: DateTime<Utc>) -> Self {
        self.fetched_at = Some(at);
        self
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.target_variable = label;
        self
    }

    pub fn label(&self) -> Option<Label> {
        self.target_variable
    }

    /// Field invariants that do not depend on the rest of the corpus.
    pub fn check(&self) -> Result<(), String> {
        if !(1..=5).contains(&self.app_rating_given) {
            return Err(format!("app_rating_given {} outside [1,5]", self.app_rating_given));
        }
        if self.review_description.trim().is_empty() {
            return Err("review_description is empty".to_string());
        }
        if self.record_id.as_str().is_empty() {
            return Err("record_id is empty".to_string());
        }
        Ok(())
    }
}

/// Label histogram plus the min/max balance ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub counts: BTreeMap<Label, usize>,
    /// `min/max` over both classes; absent when nothing is labeled.
    pub balance_ratio: Option<f64>,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn labeled(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    provenance: String,
    records: Vec<ReviewRecord>,
}

impl Corpus {
    /// Validates every record and id uniqueness, reporting all problems at once.
    pub fn new(name: impl Into<String>, provenance: impl Into<String>, records: Vec<ReviewRecord>) -> Result<Self, CorpusError> {
        let mut issues = Vec::new();
        let mut seen = HashSet::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            if let Err(message) = record.check() {
                issues.push(RowIssue { row: i + 1, message });
            }
            if !seen.insert(record.record_id.as_str()) {
                issues.push(RowIssue { row: i + 1, message: format!("duplicate record_id {}", record.record_id) });
            }
        }
        if !issues.is_empty() {
            return Err(CorpusError::Validation(issues));
        }
        Ok(Corpus { name: name.into(), provenance: provenance.into(), records })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Corpus { name: name.into(), provenance: String::new(), records: Vec::new() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn records(&self) -> &[ReviewRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ReviewRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ReviewRecord> {
        self.records.iter()
    }

    pub fn get(&self, id: &RecordId) -> Option<&ReviewRecord> {
        self.records.iter().find(|r| &r.record_id == id)
    }

    /// Sub-corpus of labeled records, order preserved.
    pub fn labeled(&self) -> Corpus {
        self.filtered(|r| r.target_variable.is_some())
    }

    pub fn filtered(&self, keep: impl Fn(&ReviewRecord) -> bool) -> Corpus {
        Corpus {
            name: self.name.clone(),
            provenance: self.provenance.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Fails on the first unlabeled record.
    pub fn require_labels(&self) -> Result<(), CorpusError> {
        match self.records.iter().find(|r| r.target_variable.is_none()) {
            Some(r) => Err(CorpusError::Unlabeled(r.record_id.clone())),
            None => Ok(()),
        }
    }

    pub fn label_counts(&self) -> LabelCounts {
        label_counts(self)
    }

    pub fn app_distribution(&self) -> BTreeMap<String, usize> {
        app_distribution(self)
    }

    /// SHA-256 of the canonical JSONL serialization.
    pub fn content_hash(&self) -> String {
        sha256_hex(to_jsonl_string(self))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a ReviewRecord;
    type IntoIter = std::slice::Iter<'a, ReviewRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

pub fn label_counts(corpus: &Corpus) -> LabelCounts {
    let mut counts = BTreeMap::new();
    for label in corpus.iter().filter_map(|r| r.target_variable) {
        *counts.entry(label).or_insert(0usize) += 1;
    }
    let useful = counts.get(&Label::Useful).copied().unwrap_or(0);
    let not_useful = counts.get(&Label::NotUseful).copied().unwrap_or(0);
    let balance_ratio =
        if useful + not_useful == 0 { None } else { Some(useful.min(not_useful) as f64 / useful.max(not_useful) as f64) };
    LabelCounts { counts, balance_ratio }
}

pub fn app_distribution(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for record in corpus {
        *counts.entry(record.app_name.clone()).or_insert(0usize) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(app: &str, user: &str, text: &str, label: Option<Label>) -> ReviewRecord {
        ReviewRecord::new(app, user, 3, text, label)
    }

    #[test]
    fn balanced_counts() {
        let mut records = Vec::new();
        for i in 0..1600 {
            records.push(rec("A", &format!("u{i}"), "crashes", Some(Label::Useful)));
            records.push(rec("A", &format!("v{i}"), "nice", Some(Label::NotUseful)));
        }
        let corpus = Corpus::new("c", "", records).unwrap();
        let counts = corpus.label_counts();
        assert_eq!(counts.get(Label::Useful), 1600);
        assert_eq!(counts.get(Label::NotUseful), 1600);
        assert_eq!(counts.balance_ratio, Some(1.0));
    }

    #[test]
    fn no_labels_gives_empty_map() {
        let corpus = Corpus::new("c", "", vec![rec("A", "u", "x", None)]).unwrap();
        let counts = corpus.label_counts();
        assert!(counts.counts.is_empty());
        assert_eq!(counts.balance_ratio, None);
    }

    #[test]
    fn skewed_ratio() {
        let records = vec![
            rec("A", "1", "a", Some(Label::Useful)),
            rec("A", "2", "b", Some(Label::Useful)),
            rec("A", "3", "c", Some(Label::Useful)),
            rec("A", "4", "d", Some(Label::NotUseful)),
        ];
        let counts = Corpus::new("c", "", records).unwrap().label_counts();
        assert_eq!(counts.balance_ratio, Some(1.0 / 3.0));
        assert_eq!(counts.labeled(), 4);
    }

    #[test]
    fn app_distribution_counts() {
        let records = vec![rec("A", "1", "a", None), rec("A", "2", "b", None), rec("B", "3", "c", None)];
        let dist = Corpus::new("c", "", records).unwrap().app_distribution();
        assert_eq!(dist, BTreeMap::from([("A".to_string(), 2), ("B".to_string(), 1)]));
        assert!(Corpus::empty("e").app_distribution().is_empty());
    }

    #[test]
    fn ten_apps_linear_scan() {
        let mut records = Vec::new();
        for app in 0..10 {
            for i in 0..320 {
                records.push(rec(&format!("app{app}"), &format!("u{i}"), "text", None));
            }
        }
        let corpus = Corpus::new("c", "", records).unwrap();
        let dist = corpus.app_distribution();
        // independent recount
        for (app, count) in &dist {
            let scanned = corpus.iter().filter(|r| &r.app_name == app).count();
            assert_eq!(*count, scanned);
            assert_eq!(*count, 320);
        }
        assert_eq!(dist.values().sum::<usize>(), 3200);
    }

    #[test]
    fn validation_reports_every_row() {
        let mut bad = rec("A", "u", "fine", None);
        bad.app_rating_given = 7;
        let blank = rec("A", "v", "   ", None);
        let dup = rec("A", "u2", "same", None);
        let err = Corpus::new("c", "", vec![bad, blank, dup.clone(), dup]).unwrap_err();
        match err {
            CorpusError::Validation(issues) => {
                let rows: Vec<usize> = issues.iter().map(|i| i.row).collect();
                assert_eq!(rows, vec![1, 2, 4]);
                assert!(issues[0].message.contains("outside [1,5]"));
                assert!(issues[2].message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_parsing_is_lenient_on_spelling() {
        assert_eq!("Not Useful".parse::<Label>(), Ok(Label::NotUseful));
        assert_eq!("useful".parse::<Label>(), Ok(Label::Useful));
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn record_id_is_content_hash() {
        let a = rec("A", "u", "text", None);
        let b = rec("A", "u", "text", Some(Label::Useful));
        let c = rec("A", "u", "text2", None);
        assert_eq!(a.record_id, b.record_id);
        assert_ne!(a.record_id, c.record_id);
        assert_eq!(a.record_id.as_str().len(), 32);
    }
}
