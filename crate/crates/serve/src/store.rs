//! SQLite-backed annotation store: review records plus an append-only label
//! history. The latest history entry for a record is its effective label.

use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use elicit_core::{Corpus, Label, RecordId, ReviewRecord};
use rusqlite::{params, Connection, OptionalExtension, TransactionBehavior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("store schema version {found} is not supported (expected {STORE_SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("unknown record {0}")]
    UnknownRecord(RecordId),
    #[error("no labeled records")]
    NoLabels,
    #[error("{0}")]
    Corpus(#[from] elicit_core::CorpusError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueuePolicy {
    /// Least confident model suggestion first; unscored records last.
    #[default]
    Uncertainty,
    Fifo,
}

impl std::str::FromStr for QueuePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertainty" => Ok(QueuePolicy::Uncertainty),
            "fifo" => Ok(QueuePolicy::Fifo),
            other => Err(format!("unknown queue policy `{other}` (uncertainty, fifo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub record_id: RecordId,
    pub label: Label,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub record: ReviewRecord,
    /// Model score for `useful` under the checkpoint named by `scored_by`.
    pub score: Option<f64>,
    pub scored_by: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreCounts {
    pub records: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub useful: usize,
    pub not_useful: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportStats {
    pub inserted: usize,
    pub already_present: usize,
    pub labels_recorded: usize,
}

/// Queue filters; all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueFilter {
    pub app: Option<String>,
    pub min_rating: Option<u8>,
    pub max_rating: Option<u8>,
}

pub struct AnnotationStore {
    conn: Mutex<Connection>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS records (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    record_id TEXT NOT NULL UNIQUE,
    app_name TEXT NOT NULL,
    username TEXT NOT NULL,
    rating INTEGER NOT NULL CHECK (rating BETWEEN 1 AND 5),
    text TEXT NOT NULL,
    fetched_at TEXT,
    score REAL,
    scored_by TEXT
);
CREATE TABLE IF NOT EXISTS labels (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    record_id TEXT NOT NULL REFERENCES records(record_id),
    label TEXT NOT NULL CHECK (label IN ('useful', 'not_useful')),
    annotator TEXT NOT NULL,
    timestamp TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS labels_by_record ON labels(record_id, id);
";

/// Latest label per record.
const LATEST: &str = "SELECT l.record_id, l.label FROM labels l
    WHERE l.id = (SELECT MAX(id) FROM labels m WHERE m.record_id = l.record_id)";

fn parse_time(s: Option<String>) -> Option<DateTime<Utc>> {
    s.and_then(|s| DateTime::parse_from_rfc3339(&s).ok()).map(|t| t.with_timezone(&Utc))
}

fn parse_label(s: &str) -> rusqlite::Result<Label> {
    s.parse().map_err(|e: String| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, e.into()))
}

const RECORD_COLUMNS: &str =
    "r.record_id, r.app_name, r.username, r.rating, r.text, r.fetched_at, r.score, r.scored_by, lt.label";

fn row_to_stored(row: &rusqlite::Row<'_>) -> rusqlite::Result<StoredRecord> {
    let label: Option<String> = row.get(8)?;
    let record = ReviewRecord {
        record_id: RecordId::new(row.get::<_, String>(0)?),
        app_name: row.get(1)?,
        username: row.get(2)?,
        app_rating_given: row.get(3)?,
        review_description: row.get(4)?,
        fetched_at: parse_time(row.get(5)?),
        target_variable: label.as_deref().map(parse_label).transpose()?,
    };
    Ok(StoredRecord { record, score: row.get(6)?, scored_by: row.get(7)? })
}

impl AnnotationStore {
    pub fn open(path: &Path) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        let found: Option<String> =
            conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0)).optional()?;
        match found {
            None => {
                conn.execute("INSERT INTO meta (key, value) VALUES ('schema_version', ?1)", [STORE_SCHEMA_VERSION.to_string()])?;
            }
            Some(v) => {
                let found = v.parse().unwrap_or(0);
                if found != STORE_SCHEMA_VERSION {
                    return Err(StoreError::Schema { found });
                }
            }
        }
        Ok(AnnotationStore { conn: Mutex::new(conn) })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Adds records not already present. Labels carried by new records are
    /// entered into the history under `annotator`.
    pub fn import(&self, corpus: &Corpus, annotator: &str) -> Result<ImportStats> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let mut stats = ImportStats::default();
        let now = Utc::now().to_rfc3339();
        for r in corpus.iter() {
            let inserted = tx.execute(
                "INSERT OR IGNORE INTO records (record_id, app_name, username, rating, text, fetched_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    r.record_id.as_str(),
                    r.app_name,
                    r.username,
                    r.app_rating_given,
                    r.review_description,
                    r.fetched_at.map(|t| t.to_rfc3339())
                ],
            )?;
            if inserted == 0 {
                stats.already_present += 1;
                continue;
            }
            stats.inserted += 1;
            if let Some(label) = r.target_variable {
                tx.execute(
                    "INSERT INTO labels (record_id, label, annotator, timestamp) VALUES (?1, ?2, ?3, ?4)",
                    params![r.record_id.as_str(), label.as_str(), annotator, now],
                )?;
                stats.labels_recorded += 1;
            }
        }
        tx.commit()?;
        Ok(stats)
    }

    pub fn get(&self, id: &RecordId) -> Result<StoredRecord> {
        let conn = self.conn();
        let sql = format!(
            "SELECT {RECORD_COLUMNS} FROM records r LEFT JOIN ({LATEST}) lt ON lt.record_id = r.record_id
             WHERE r.record_id = ?1"
        );
        conn.query_row(&sql, [id.as_str()], row_to_stored).optional()?.ok_or_else(|| StoreError::UnknownRecord(id.clone()))
    }

    /// Appends a history entry; the record leaves the queue in the same
    /// transaction.
    pub fn label(&self, id: &RecordId, label: Label, annotator: &str, at: DateTime<Utc>) -> Result<LabelEntry> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let exists: Option<i64> =
            tx.query_row("SELECT seq FROM records WHERE record_id = ?1", [id.as_str()], |r| r.get(0)).optional()?;
        if exists.is_none() {
            return Err(StoreError::UnknownRecord(id.clone()));
        }
        tx.execute(
            "INSERT INTO labels (record_id, label, annotator, timestamp) VALUES (?1, ?2, ?3, ?4)",
            params![id.as_str(), label.as_str(), annotator, at.to_rfc3339()],
        )?;
        tx.commit()?;
        Ok(LabelEntry { record_id: id.clone(), label, annotator: annotator.to_string(), timestamp: at })
    }

    /// Oldest first.
    pub fn history(&self, id: &RecordId) -> Result<Vec<LabelEntry>> {
        self.get(id)?;
        let conn = self.conn();
        let mut stmt =
            conn.prepare_cached("SELECT record_id, label, annotator, timestamp FROM labels WHERE record_id = ?1 ORDER BY id")?;
        let rows = stmt.query_map([id.as_str()], |row| {
            Ok(LabelEntry {
                record_id: RecordId::new(row.get::<_, String>(0)?),
                label: parse_label(&row.get::<_, String>(1)?)?,
                annotator: row.get(2)?,
                timestamp: parse_time(row.get(3)?).unwrap_or_default(),
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn history_len(&self) -> Result<usize> {
        let n: i64 = self.conn().query_row("SELECT COUNT(*) FROM labels", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn counts(&self) -> Result<StoreCounts> {
        let conn = self.conn();
        let records: i64 = conn.query_row("SELECT COUNT(*) FROM records", [], |r| r.get(0))?;
        let sql = format!("SELECT label, COUNT(*) FROM ({LATEST}) GROUP BY label");
        let mut stmt = conn.prepare(&sql)?;
        let mut c = StoreCounts { records: records as usize, ..StoreCounts::default() };
        for row in stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))? {
            let (label, n) = row?;
            match parse_label(&label)? {
                Label::Useful => c.useful = n as usize,
                Label::NotUseful => c.not_useful = n as usize,
            }
        }
        c.labeled = c.useful + c.not_useful;
        c.unlabeled = c.records - c.labeled;
        Ok(c)
    }

    /// Up to `limit` unlabeled records in queue order.
    pub fn unlabeled(&self, limit: usize, policy: QueuePolicy, filter: &QueueFilter) -> Result<Vec<StoredRecord>> {
        let order = match policy {
            QueuePolicy::Uncertainty => "r.score IS NULL, ABS(r.score - 0.5), r.seq",
            QueuePolicy::Fifo => "r.seq",
        };
        let sql = format!(
            "SELECT {RECORD_COLUMNS} FROM records r LEFT JOIN ({LATEST}) lt ON lt.record_id = r.record_id
             WHERE lt.label IS NULL
               AND (?1 IS NULL OR r.app_name = ?1)
               AND (?2 IS NULL OR r.rating >= ?2)
               AND (?3 IS NULL OR r.rating <= ?3)
             ORDER BY {order} LIMIT ?4"
        );
        let conn = self.conn();
        let mut stmt = conn.prepare(&sql)?;
        let rows = stmt.query_map(params![filter.app, filter.min_rating, filter.max_rating, limit as i64], row_to_stored)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Unlabeled records not yet scored by `checkpoint`.
    pub fn unscored(&self, checkpoint: &str) -> Result<Vec<ReviewRecord>> {
        let sql = format!(
            "SELECT {RECORD_COLUMNS} FROM records r LEFT JOIN ({LATEST}) lt ON lt.record_id = r.record_id
             WHERE lt.label IS NULL AND (r.scored_by IS NULL OR r.scored_by != ?1) ORDER BY r.seq"
        );
        let conn = self.conn();
        let mut stmt = conn.prepare(&sql)?;
        let rows = stmt.query_map([checkpoint], row_to_stored)?;
        rows.map(|r| Ok(r?.record)).collect()
    }

    pub fn set_scores(&self, checkpoint: &str, scores: &[(RecordId, f64)]) -> Result<()> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        {
            let mut stmt = tx.prepare_cached("UPDATE records SET score = ?1, scored_by = ?2 WHERE record_id = ?3")?;
            for (id, s) in scores {
                stmt.execute(params![s, checkpoint, id.as_str()])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    /// Every labeled record with its latest label, in insertion order.
    pub fn export_corpus(&self, name: &str) -> Result<Corpus> {
        let sql =
            format!("SELECT {RECORD_COLUMNS} FROM records r JOIN ({LATEST}) lt ON lt.record_id = r.record_id ORDER BY r.seq");
        let records: Vec<ReviewRecord> = {
            let conn = self.conn();
            let mut stmt = conn.prepare(&sql)?;
            let rows = stmt.query_map([], row_to_stored)?;
            rows.map(|r| r.map(|s| s.record)).collect::<rusqlite::Result<_>>()?
        };
        if records.is_empty() {
            return Err(StoreError::NoLabels);
        }
        Ok(Corpus::new(name, "annotation store export", records)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Corpus {
        let records = (0..n).map(|i| ReviewRecord::new("App", format!("u{i}"), 1 + (i % 5) as u8, format!("review {i}"), None));
        Corpus::new("t", "test", records.collect()).unwrap()
    }

    #[test]
    fn labels_leave_the_queue_and_keep_history() {
        let s = AnnotationStore::open_in_memory().unwrap();
        let c = corpus(3);
        assert_eq!(s.import(&c, "import").unwrap().inserted, 3);
        assert_eq!(s.import(&c, "import").unwrap().already_present, 3);
        let id = &c.records()[1].record_id;
        s.label(id, Label::Useful, "ana", Utc::now()).unwrap();
        s.label(id, Label::NotUseful, "bo", Utc::now()).unwrap();
        let h = s.history(id).unwrap();
        assert_eq!(h.iter().map(|e| e.label).collect::<Vec<_>>(), [Label::Useful, Label::NotUseful]);
        assert_eq!(s.get(id).unwrap().record.target_variable, Some(Label::NotUseful));
        let queue = s.unlabeled(10, QueuePolicy::Fifo, &QueueFilter::default()).unwrap();
        assert_eq!(queue.len(), 2);
        let counts = s.counts().unwrap();
        assert_eq!((counts.records, counts.labeled, counts.unlabeled, counts.not_useful), (3, 1, 2, 1));
        assert!(matches!(s.label(&RecordId::new("nope"), Label::Useful, "x", Utc::now()), Err(StoreError::UnknownRecord(_))));
    }

    #[test]
    fn uncertainty_order_and_filters() {
        let s = AnnotationStore::open_in_memory().unwrap();
        let c = corpus(4);
        s.import(&c, "import").unwrap();
        let ids: Vec<RecordId> = c.iter().map(|r| r.record_id.clone()).collect();
        s.set_scores("ck", &[(ids[0].clone(), 0.99), (ids[1].clone(), 0.45), (ids[2].clone(), 0.7)]).unwrap();
        let q = s.unlabeled(10, QueuePolicy::Uncertainty, &QueueFilter::default()).unwrap();
        let order: Vec<&RecordId> = q.iter().map(|r| &r.record.record_id).collect();
        assert_eq!(order, [&ids[1], &ids[2], &ids[0], &ids[3]]);
        assert_eq!(s.unscored("ck").unwrap().len(), 1);
        let low = QueueFilter { max_rating: Some(2), ..QueueFilter::default() };
        assert!(s.unlabeled(10, QueuePolicy::Fifo, &low).unwrap().iter().all(|r| r.record.app_rating_given <= 2));
    }

    #[test]
    fn export_requires_labels() {
        let s = AnnotationStore::open_in_memory().unwrap();
        s.import(&corpus(2), "import").unwrap();
        assert!(matches!(s.export_corpus("x"), Err(StoreError::NoLabels)));
    }

    #[test]
    fn reopens_file_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.sqlite");
        {
            let s = AnnotationStore::open(&path).unwrap();
            s.import(&corpus(2), "import").unwrap();
        }
        assert_eq!(AnnotationStore::open(&path).unwrap().counts().unwrap().records, 2);
    }
}
