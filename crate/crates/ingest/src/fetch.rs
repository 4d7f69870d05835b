use std::collections::{HashSet, VecDeque};
use std::time::Duration;

use elicit_core::hashing::sha256_hex;
use elicit_core::{RecordId, ReviewRecord};
use serde::{Deserialize, Serialize};

use crate::endpoint::{Endpoint, RawReview};
use crate::error::{excerpt, IngestError, Result, TransportError};
use crate::spec::FetchSpec;
use crate::transport::{Response, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total tries per request, the first included.
    pub attempts: u32,
    /// Wait before the second try; doubled for each one after.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Wait before try `attempt` (1-based); zero for the first.
    pub fn backoff(&self, attempt: u32) -> Duration {
        match attempt {
            0 | 1 => Duration::ZERO,
            n => self.initial_backoff.saturating_mul(1 << (n - 2).min(16)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchStats {
    pub requests: usize,
    pub pages: usize,
    /// Entries dropped for failing the record invariants or the page schema.
    pub skipped: usize,
}

/// Lazily paginated records for one app, in page order.
///
/// Yields at most `max_reviews` items; after an error the stream ends.
pub struct ReviewStream<'a> {
    spec: FetchSpec,
    transport: &'a dyn Transport,
    endpoint: &'a dyn Endpoint,
    retry: RetryPolicy,
    page: usize,
    cursor: Option<String>,
    buffer: VecDeque<ReviewRecord>,
    yielded: usize,
    done: bool,
    stats: FetchStats,
}

pub fn fetch_reviews<'a>(
    spec: &FetchSpec,
    transport: &'a dyn Transport,
    endpoint: &'a dyn Endpoint,
    retry: RetryPolicy,
) -> Result<ReviewStream<'a>> {
    spec.validate()?;
    Ok(ReviewStream {
        spec: spec.clone(),
        transport,
        endpoint,
        retry,
        page: 0,
        cursor: None,
        buffer: VecDeque::new(),
        yielded: 0,
        done: false,
        stats: FetchStats::default(),
    })
}

fn validate_raw(raw: RawReview, app: &str) -> std::result::Result<ReviewRecord, String> {
    if !(1..=5).contains(&raw.rating) {
        return Err(format!("rating {} outside [1,5]", raw.rating));
    }
    if raw.text.trim().is_empty() {
        return Err("empty review text".into());
    }
    Ok(ReviewRecord::new(app, raw.user, raw.rating as u8, raw.text, None))
}

impl ReviewStream<'_> {
    pub fn stats(&self) -> FetchStats {
        self.stats
    }

    pub fn spec(&self) -> &FetchSpec {
        &self.spec
    }

    fn transport_error(&self, attempts: u32, last: TransportError) -> IngestError {
        IngestError::Transport { app_id: self.spec.app_id.clone(), page: self.page, attempts, last }
    }

    fn execute_with_retry(&mut self, count: usize) -> Result<Response> {
        let mut request = self.endpoint.page_request(&self.spec, self.page, self.cursor.as_deref(), count);
        request.pace = self.spec.request_interval();
        let mut last = TransportError::network("no attempt made");
        for attempt in 1..=self.retry.attempts.max(1) {
            let wait = self.retry.backoff(attempt);
            if !wait.is_zero() {
                log::info!("{} page {}: retrying in {wait:?} after {last}", self.spec.app_id, self.page);
                std::thread::sleep(wait);
            }
            self.stats.requests += 1;
            let err = match self.transport.execute(&request) {
                Ok(r) if (200..300).contains(&r.status) => return Ok(r),
                Ok(r) => TransportError::status(r.status, excerpt(&r.body)),
                Err(e) => e,
            };
            if !err.retryable() {
                return Err(self.transport_error(attempt, err));
            }
            last = err;
        }
        Err(self.transport_error(self.retry.attempts.max(1), last))
    }

    fn fill(&mut self) -> Result<()> {
        self.page += 1;
        let count = self.spec.page_size.min(self.spec.max_reviews - self.yielded);
        let response = match self.execute_with_retry(count) {
            Err(IngestError::Transport { last, .. })
                if last.status == Some(404) && self.page > 1 && self.endpoint.not_found_ends() =>
            {
                self.done = true;
                return Ok(());
            }
            other => other?,
        };
        let page = self.endpoint.parse_page(self.page, &response.body).map_err(|reason| IngestError::Parse {
            app_id: self.spec.app_id.clone(),
            page: self.page,
            reason,
            excerpt: excerpt(&response.body),
        })?;
        self.stats.pages += 1;
        self.stats.skipped += page.malformed;
        let empty = page.reviews.is_empty() && page.malformed == 0;
        for raw in page.reviews {
            match validate_raw(raw, self.spec.display_name()) {
                Ok(mut r) => {
                    r.fetched_at = response.received_at;
                    self.buffer.push_back(r);
                }
                Err(why) => {
                    log::warn!("{} page {}: skipping review: {why}", self.spec.app_id, self.page);
                    self.stats.skipped += 1;
                }
            }
        }
        if empty || page.next.is_none() || page.next == self.cursor {
            self.done = true;
        }
        self.cursor = page.next;
        Ok(())
    }

    /// Drains the stream.
    pub fn collect_all(mut self) -> Result<FetchOutcome> {
        let mut records = Vec::new();
        for r in self.by_ref() {
            records.push(r?);
        }
        Ok(FetchOutcome { app_id: self.spec.app_id.clone(), records, stats: self.stats })
    }
}

impl Iterator for ReviewStream<'_> {
    type Item = Result<ReviewRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.yielded < self.spec.max_reviews {
            if let Some(r) = self.buffer.pop_front() {
                self.yielded += 1;
                return Some(Ok(r));
            }
            if self.done {
                return None;
            }
            if let Err(e) = self.fill() {
                self.done = true;
                self.buffer.clear();
                return Some(Err(e));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub app_id: String,
    pub records: Vec<ReviewRecord>,
    pub stats: FetchStats,
}

/// Fetches several apps concurrently, one thread per app; results keep the
/// order of `specs`. Pagination within an app stays sequential.
pub fn fetch_many(
    specs: &[FetchSpec],
    transport: &dyn Transport,
    endpoint: &dyn Endpoint,
    retry: RetryPolicy,
) -> Vec<Result<FetchOutcome>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| scope.spawn(move || fetch_reviews(spec, transport, endpoint, retry)?.collect_all()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("fetch thread panicked")).collect()
    })
}

/// Keeps the first record for each id, in input order.
pub fn dedupe(records: impl IntoIterator<Item = ReviewRecord>) -> impl Iterator<Item = ReviewRecord> {
    let mut seen: HashSet<RecordId> = HashSet::new();
    records.into_iter().filter(move |r| seen.insert(r.record_id.clone()))
}

/// Stable pseudonym: `user-` and 16 hex digits of SHA-256.
pub fn anonymize_username(name: &str) -> String {
    format!("user-{}", &sha256_hex(name)[..16])
}

/// The record with its username hashed; the content id is recomputed.
pub fn anonymize(record: ReviewRecord) -> ReviewRecord {
    let mut out = ReviewRecord::new(
        record.app_name,
        anonymize_username(&record.username),
        record.app_rating_given,
        record.review_description,
        record.target_variable,
    );
    out.fetched_at = record.fetched_at;
    out
}
