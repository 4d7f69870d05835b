//! Fixed-length model inputs from review text.
//!
//! Encoder families frame content as `[CLS] pieces… [SEP] [PAD]…`; the
//! decoder family uses `<bos> pieces… <pad>…` and is classified from its
//! last non-padding position. Label ids are fixed project-wide:
//! useful=1, not_useful=0.

mod vocab;
mod wordpiece;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, RecordId};
use crate::hashing::sha256_hex;
use crate::textprep::{prepare_text, PrepConfig, PrepError};

pub use vocab::Vocab;
pub use wordpiece::{basic_tokenize, tokenize_ids};

pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("max_len must be at least 3, got {0}")]
    MaxLenTooSmall(usize),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("vocabulary lacks special token `{0}`")]
    MissingSpecial(String),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error("cache i/o on {path}: {message}")]
    Cache { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    EncoderBase,
    EncoderDistilled,
    DecoderGemma,
}

impl ModelFamily {
    pub fn is_encoder(self) -> bool {
        !matches!(self, ModelFamily::DecoderGemma)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::EncoderBase => "encoder_base",
            ModelFamily::EncoderDistilled => "encoder_distilled",
            ModelFamily::DecoderGemma => "decoder_gemma",
        }
    }

    /// Special-token spellings the family's vocabulary must contain, in
    /// canonical vocabulary order.
    pub fn special_spellings(self) -> &'static [&'static str] {
        if self.is_encoder() {
            &["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        } else {
            &["<pad>", "<eos>", "<bos>", "<unk>"]
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "encoder_base" => Ok(ModelFamily::EncoderBase),
            "encoder_distilled" => Ok(ModelFamily::EncoderDistilled),
            "decoder_gemma" => Ok(ModelFamily::DecoderGemma),
            other => Err(format!("unknown model family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialRole {
    SequenceStart,
    Separator,
    Padding,
    Unknown,
}

/// Which end of an over-long piece sequence survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    #[default]
    KeepHead,
    KeepTail,
}

#[derive(Debug, Clone)]
pub struct TokenizerAdapter {
    family: ModelFamily,
    vocab: Arc<Vocab>,
    vocab_ref: String,
    special: BTreeMap<SpecialRole, u32>,
    lowercase: bool,
    truncation: Truncation,
}

impl TokenizerAdapter {
    pub fn new(family: ModelFamily, vocab: Vocab, lowercase: bool) -> Result<Self, EncodeError> {
        let lookup = |tok: &str| vocab.id(tok).ok_or_else(|| EncodeError::MissingSpecial(tok.to_string()));
        let mut special = BTreeMap::new();
        if family.is_encoder() {
            special.insert(SpecialRole::SequenceStart, lookup("[CLS]")?);
            special.insert(SpecialRole::Separator, lookup("[SEP]")?);
            special.insert(SpecialRole::Padding, lookup("[PAD]")?);
            special.insert(SpecialRole::Unknown, lookup("[UNK]")?);
        } else {
            special.insert(SpecialRole::SequenceStart, lookup("<bos>")?);
            special.insert(SpecialRole::Padding, lookup("<pad>")?);
            special.insert(SpecialRole::Unknown, lookup("<unk>")?);
        }
        let vocab_ref = vocab.vocab_ref();
        Ok(TokenizerAdapter { family, vocab: Arc::new(vocab), vocab_ref, special, lowercase, truncation: Truncation::KeepHead })
    }

    /// Adapter over a vocabulary built from `texts` for a freshly initialized model.
    pub fn build<'a>(
        family: ModelFamily,
        texts: impl IntoIterator<Item = &'a str>,
        max_vocab: usize,
    ) -> Result<Self, EncodeError> {
        let vocab = Vocab::build(family.special_spellings(), texts, max_vocab, true)?;
        Self::new(family, vocab, true)
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_ref(&self) -> &str {
        &self.vocab_ref
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn special_tokens(&self) -> &BTreeMap<SpecialRole, u32> {
        &self.special
    }

    pub fn special(&self, role: SpecialRole) -> Option<u32> {
        self.special.get(&role).copied()
    }

    pub fn pad_id(&self) -> u32 {
        self.special[&SpecialRole::Padding]
    }

    /// Subword ids for `text` with no framing or padding.
    pub fn pieces(&self, text: &str) -> Vec<u32> {
        tokenize_ids(text, &self.vocab, self.special[&SpecialRole::Unknown], self.lowercase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub token_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub label_id: Option<u8>,
    /// No content pieces: only framing tokens and padding.
    pub empty: bool,
}

impl EncodedExample {
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn label(&self) -> Option<Label> {
        self.label_id.and_then(Label::from_id)
    }
}

pub fn encode(text: &str, adapter: &TokenizerAdapter, max_len: usize) -> Result<EncodedExample, EncodeError> {
    if max_len < 3 {
        return Err(EncodeError::MaxLenTooSmall(max_len));
    }
    let mut pieces = adapter.pieces(text);
    let empty = pieces.is_empty();
    let framing = if adapter.family.is_encoder() { 2 } else { 1 };
    let budget = max_len - framing;
    if pieces.len() > budget {
        pieces = match adapter.truncation {
            Truncation::KeepHead => pieces[..budget].to_vec(),
            Truncation::KeepTail => pieces[pieces.len() - budget..].to_vec(),
        };
    }
    let mut token_ids = Vec::with_capacity(max_len);
    token_ids.push(adapter.special[&SpecialRole::SequenceStart]);
    token_ids.extend_from_slice(&pieces);
    if let Some(sep) = adapter.special(SpecialRole::Separator) {
        token_ids.push(sep);
    }
    let real = token_ids.len();
    token_ids.resize(max_len, adapter.pad_id());
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    Ok(EncodedExample { token_ids, attention_mask, label_id: None, empty })
}

/// Which string of a record reaches the model tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    #[default]
    Cleaned,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingMetadata {
    pub corpus_hash: String,
    pub prep_config_hash: String,
    pub vocab_ref: String,
    pub max_len: usize,
    pub model_family: ModelFamily,
    pub text_source: TextSource,
    pub label_mapping: BTreeMap<String, u8>,
}

impl EncodingMetadata {
    pub fn cache_key(&self) -> String {
        let text_source = match self.text_source {
            TextSource::Cleaned => "cleaned",
            TextSource::Raw => "raw",
        };
        sha256_hex(format!("{}|{}|{}|{}|{}", self.corpus_hash, self.prep_config_hash, self.vocab_ref, self.max_len, text_source))
    }
}

pub fn label_mapping() -> BTreeMap<String, u8> {
    Label::ALL.iter().map(|l| (l.as_str().to_string(), l.id())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedRow {
    pub record_id: RecordId,
    #[serde(flatten)]
    pub example: EncodedExample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    pub metadata: EncodingMetadata,
    pub rows: Vec<EncodedRow>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn examples(&self) -> impl Iterator<Item = &EncodedExample> {
        self.rows.iter().map(|r| &r.example)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &RecordId> {
        self.rows.iter().filter(|r| r.example.empty).map(|r| &r.record_id)
    }

    /// Metadata header line followed by one row per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.metadata).expect("metadata serializes");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty encoded dataset")?;
        let metadata: EncodingMetadata = serde_json::from_str(header).map_err(|e| e.to_string())?;
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect::<Result<Vec<EncodedRow>, _>>()?;
        Ok(EncodedDataset { metadata, rows })
    }

    /// Keeps only the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset { metadata: self.metadata.clone(), rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }
}

/// Preprocesses and encodes every record, order preserved. Records that end
/// up empty are kept and marked.
pub fn encode_corpus(
    corpus: &Corpus,
    config: &PrepConfig,
    adapter: &TokenizerAdapter,
    max_len: usize,
    text_source: TextSource,
) -> Result<EncodedDataset, EncodeError> {
    config.validate()?;
    let mut rows = Vec::with_capacity(corpus.len());
    for record in corpus {
        let text = match text_source {
            TextSource::Cleaned => prepare_text(&record.review_description, config)?.join(" "),
            TextSource::Raw => record.review_description.clone(),
        };
        let mut example = encode(&text, adapter, max_len)?;
        example.label_id = record.target_variable.map(Label::id);
        rows.push(EncodedRow { record_id: record.record_id.clone(), example });
    }
    Ok(EncodedDataset {
        metadata: EncodingMetadata {
            corpus_hash: corpus.content_hash(),
            prep_config_hash: config.config_hash(),
            vocab_ref: adapter.vocab_ref().to_string(),
            max_len,
            model_family: adapter.family(),
            text_source,
            label_mapping: label_mapping(),
        },
        rows,
    })
}

/// On-disk cache of encoded datasets keyed by [`EncodingMetadata::cache_key`].
#[derive(Debug, Clone)]
pub struct EncodingCache {
    dir: PathBuf,
}

impl EncodingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EncodingCache { dir: dir.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("encoded-{key}.jsonl"))
    }

    /// Returns the cached dataset when present, else encodes and stores it.
    pub fn get_or_encode(
        &self,
        corpus: &Corpus,
        config: &PrepConfig,
        adapter: &TokenizerAdapter,
        max_len: usize,
        text_source: TextSource,
    ) -> Result<(EncodedDataset, bool), EncodeError> {
        let probe = EncodingMetadata {
            corpus_hash: corpus.content_hash(),
            prep_config_hash: config.config_hash(),
            vocab_ref: adapter.vocab_ref().to_string(),
            max_len,
            model_family: adapter.family(),
            text_source,
            label_mapping: label_mapping(),
        };
        let path = self.path_for(&probe.cache_key());
        let cache_err = |message: String| EncodeError::Cache { path: path.display().to_string(), message };
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| cache_err(e.to_string()))?;
            let ds = EncodedDataset::from_jsonl(&text).map_err(cache_err)?;
            return Ok((ds, true));
        }
        let ds = encode_corpus(corpus, config, adapter, max_len, text_source)?;
        fs::create_dir_all(&self.dir).map_err(|e| cache_err(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp).map_err(|e| cache_err(e.to_string()))?;
        file.write_all(ds.to_jsonl().as_bytes()).map_err(|e| cache_err(e.to_string()))?;
        fs::rename(&tmp, &path).map_err(|e| cache_err(e.to_string()))?;
        Ok((ds, false))
    }
}

pub fn load_encoded(path: &Path) -> Result<EncodedDataset, EncodeError> {
    let err = |message: String| EncodeError::Cache { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    EncodedDataset::from_jsonl(&text).map_err(err)
}
