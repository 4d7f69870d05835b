use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Label, RecordId, ReviewRecord, RowIssue};

/// Canonical five-column CSV header.
pub const CSV_HEADER: [&str; 5] = ["AppName", "Username", "app_rating_given", "review_description", "target_variable"];

const CSV_EXTRA: [&str; 2] = ["record_id", "fetched_at"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(CorpusError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus").to_string();
    parse_corpus(&text, format, name, path.display().to_string())
}

/// [`load_corpus`] on text already in memory.
pub fn parse_corpus(
    text: &str,
    format: Format,
    name: impl Into<String>,
    provenance: impl Into<String>,
) -> Result<Corpus, CorpusError> {
    let records = match format {
        Format::Jsonl => parse_jsonl(text)?,
        Format::Csv => parse_csv(text)?,
    };
    Corpus::new(name, provenance, records)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: Format) -> Result<(), CorpusError> {
    let body = match format {
        Format::Jsonl => to_jsonl_string(corpus),
        Format::Csv => to_csv_string(corpus),
    };
    fs::write(path, body).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

pub fn to_jsonl_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for record in corpus {
        out.push_str(&serde_json::to_string(record).expect("records always serialize"));
        out.push('\n');
    }
    out
}

/// Writes the five canonical columns, plus `record_id,fetched_at` only when
/// some record carries information the five columns cannot reproduce.
pub fn to_csv_string(corpus: &Corpus) -> String {
    let extended = corpus.iter().any(|r| {
        r.fetched_at.is_some() || r.record_id != RecordId::from_content(&r.app_name, &r.username, &r.review_description)
    });
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if extended {
        header.extend(CSV_EXTRA);
    }
    writer.write_record(&header).expect("in-memory write");
    for r in corpus {
        let rating = r.app_rating_given.to_string();
        let label = r.target_variable.map(Label::as_str).unwrap_or("");
        let mut row: Vec<String> =
            vec![r.app_name.clone(), r.username.clone(), rating, r.review_description.clone(), label.to_string()];
        if extended {
            row.push(r.record_id.to_string());
            row.push(r.fetched_at.map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true)).unwrap_or_default());
        }
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn parse_csv(text: &str) -> Result<Vec<ReviewRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CorpusError::Parse { row: 0, message: e.to_string() })?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(CSV_HEADER) {
        *slot = column(name).ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
    }
    let id_col = column(CSV_EXTRA[0]);
    let fetched_col = column(CSV_EXTRA[1]);

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CorpusError::Parse { row: row_no, message: e.to_string() })?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let raw = RawRecord {
            app_name: Some(field(required[0]).to_string()),
            username: Some(field(required[1]).to_string()),
            rating: Some(Value::String(field(required[2]).trim().to_string())),
            review_description: Some(field(required[3]).to_string()),
            target_variable: Some(field(required[4]).to_string()),
            record_id: id_col.map(|c| field(c).to_string()),
            fetched_at: fetched_col.map(|c| field(c).to_string()),
        };
        match raw.into_record() {
            Ok(record) => records.push(record),
            Err(message) => issues.push(RowIssue { row: row_no, message }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(CorpusError::Validation(issues))
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<ReviewRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Parse { row: row_no, message: e.to_string() })?;
        let obj =
            value.as_object().ok_or_else(|| CorpusError::Parse { row: row_no, message: "expected a JSON object".to_string() })?;
        for name in &CSV_HEADER[..4] {
            if !obj.contains_key(*name) {
                return Err(CorpusError::MissingColumn(name.to_string()));
            }
        }
        let text_of = |key: &str| -> Option<String> {
            match obj.get(key) {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(other) => Some(other.to_string()),
            }
        };
        let raw = RawRecord {
            app_name: text_of("AppName"),
            username: text_of("Username"),
            rating: obj.get("app_rating_given").cloned(),
            review_description: text_of("review_description"),
            target_variable: text_of("target_variable"),
            record_id: text_of("record_id"),
            fetched_at: text_of("fetched_at"),
        };
        match raw.into_record() {
            Ok(record) => records.push(record),
            Err(message) => issues.push(RowIssue { row: row_no, message }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(CorpusError::Validation(issues))
    }
}

struct RawRecord {
    app_name: Option<String>,
    username: Option<String>,
    rating: Option<Value>,
    review_description: Option<String>,
    target_variable: Option<String>,
    record_id: Option<String>,
    fetched_at: Option<String>,
}

impl RawRecord {
    fn into_record(self) -> Result<ReviewRecord, String> {
        let app_name = self.app_name.unwrap_or_default();
        let username = self.username.unwrap_or_default();
        let review_description = self.review_description.unwrap_or_default();
        let rating = match self.rating {
            Some(Value::Number(n)) => n.as_i64(),
            Some(Value::String(s)) => s.trim().parse::<i64>().ok(),
            _ => None,
        }
        .ok_or_else(|| "app_rating_given is not an integer".to_string())?;
        if !(1..=5).contains(&rating) {
            return Err(format!("app_rating_given {rating} outside [1,5]"));
        }
        let target_variable = match self.target_variable.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<Label>()?),
        };
        let record_id = match self.record_id.as_deref().map(str::trim) {
            None | Some("") => RecordId::from_content(&app_name, &username, &review_description),
            Some(id) => RecordId::new(id),
        };
        let fetched_at = match self.fetched_at.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(DateTime::parse_from_rfc3339(s).map_err(|e| format!("fetched_at `{s}`: {e}"))?.with_timezone(&Utc)),
        };
        let record = ReviewRecord {
            app_name,
            username,
            app_rating_given: rating as u8,
            review_description,
            target_variable,
            record_id,
            fetched_at,
        };
        record.check()?;
        Ok(record)
    }
}
