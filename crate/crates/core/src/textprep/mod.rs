//! Four-stage review preprocessing: normalization, cleaning, word
//! tokenization and stopword removal.
//!
//! Cleaning and normalization run in a fixed order:
//! HTML strip, URL strip, lowercase, special-character strip, whitespace
//! collapse. HTML and URL patterns are matched case-insensitively before
//! lowercasing, and special characters go last so `://` is still visible to
//! the URL pattern.

mod stopwords;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{RecordId, ReviewRecord};
use crate::hashing::sha256_hex;

pub use stopwords::{available_lists, stopword_list, StopwordList, DEFAULT_STOPWORD_LIST};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrepError {
    #[error("unknown stopword list `{0}`")]
    UnknownStopwordList(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_html: bool,
    pub strip_special_chars: bool,
    pub remove_stopwords: bool,
    pub stopword_list_id: String,
    /// Treat every non-ASCII character as special.
    pub ascii_only: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            lowercase: true,
            strip_urls: true,
            strip_html: true,
            strip_special_chars: true,
            remove_stopwords: true,
            stopword_list_id: DEFAULT_STOPWORD_LIST.to_string(),
            ascii_only: false,
        }
    }
}

impl PrepConfig {
    /// Every stage disabled; output tokens are a plain whitespace split.
    pub fn passthrough() -> Self {
        PrepConfig {
            lowercase: false,
            strip_urls: false,
            strip_html: false,
            strip_special_chars: false,
            remove_stopwords: false,
            ascii_only: false,
            ..PrepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<&'static StopwordList, PrepError> {
        stopword_list(&self.stopword_list_id).ok_or_else(|| PrepError::UnknownStopwordList(self.stopword_list_id.clone()))
    }

    /// `sha256:` digest of the canonical JSON form plus the stopword list version.
    pub fn config_hash(&self) -> String {
        let list_version = stopword_list(&self.stopword_list_id).map(|l| l.version.as_str()).unwrap_or("unresolved");
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("sha256:{}", sha256_hex(format!("{canonical}\n{list_version}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedRecord {
    pub record_id: RecordId,
    pub clean_text: String,
    pub tokens: Vec<String>,
    pub prep_config_hash: String,
    /// Set when no tokens survived preprocessing; the record is kept.
    pub empty_after_prep: bool,
}

fn html_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]+>").expect("valid regex"))
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("valid regex"))
}

/// Named intermediate value of one normalization stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutput {
    pub stage: &'static str,
    pub text: String,
}

/// Runs the normalization stages and records the text after each one.
pub fn normalize_traced(text: &str, config: &PrepConfig) -> Vec<StageOutput> {
    let mut trace = Vec::with_capacity(5);
    let mut current = text.to_string();
    if config.strip_html {
        current = html_pattern().replace_all(&current, " ").into_owned();
        trace.push(StageOutput { stage: "html", text: current.clone() });
    }
    if config.strip_urls {
        current = url_pattern().replace_all(&current, " ").into_owned();
        trace.push(StageOutput { stage: "url", text: current.clone() });
    }
    if config.lowercase {
        current = current.to_lowercase();
        trace.push(StageOutput { stage: "lowercase", text: current.clone() });
    }
    if config.strip_special_chars {
        let ascii_only = config.ascii_only;
        current = current
            .chars()
            .map(|c| {
                let keep = if ascii_only {
                    c.is_ascii_alphanumeric() || c.is_ascii_whitespace()
                } else {
                    c.is_alphanumeric() || c.is_whitespace()
                };
                if keep {
                    c
                } else {
                    ' '
                }
            })
            .collect();
        trace.push(StageOutput { stage: "special_chars", text: current.clone() });
    }
    current = current.split_whitespace().collect::<Vec<_>>().join(" ");
    trace.push(StageOutput { stage: "whitespace", text: current });
    trace
}

pub fn normalize(text: &str, config: &PrepConfig) -> String {
    normalize_traced(text, config).pop().map(|s| s.text).unwrap_or_default()
}

pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn remove_stopwords(tokens: &[String], list_id: &str) -> Result<Vec<String>, PrepError> {
    let list = stopword_list(list_id).ok_or_else(|| PrepError::UnknownStopwordList(list_id.to_string()))?;
    Ok(tokens.iter().filter(|t| !list.contains(t)).cloned().collect())
}

/// Text-level pipeline shared by [`preprocess`] and callers without a record.
pub fn prepare_text(text: &str, config: &PrepConfig) -> Result<Vec<String>, PrepError> {
    config.validate()?;
    let tokens = tokenize_words(&normalize(text, config));
    if config.remove_stopwords {
        remove_stopwords(&tokens, &config.stopword_list_id)
    } else {
        Ok(tokens)
    }
}

pub fn preprocess(record: &ReviewRecord, config: &PrepConfig) -> Result<PreparedRecord, PrepError> {
    let tokens = prepare_text(&record.review_description, config)?;
    Ok(PreparedRecord {
        record_id: record.record_id.clone(),
        clean_text: tokens.join(" "),
        empty_after_prep: tokens.is_empty(),
        tokens,
        prep_config_hash: config.config_hash(),
    })
}
