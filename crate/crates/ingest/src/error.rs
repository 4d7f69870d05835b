use std::path::PathBuf;

use thiserror::Error;

/// Failure of a single request, before retries are applied.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}{message}", status.map(|s| format!("HTTP {s}: ")).unwrap_or_default())]
pub struct TransportError {
    pub status: Option<u16>,
    pub message: String,
}

impl TransportError {
    pub fn network(message: impl Into<String>) -> Self {
        TransportError { status: None, message: message.into() }
    }

    pub fn status(status: u16, message: impl Into<String>) -> Self {
        TransportError { status: Some(status), message: message.into() }
    }

    /// Connection problems, throttling and server errors are worth retrying.
    pub fn retryable(&self) -> bool {
        match self.status {
            None => true,
            Some(s) => s == 429 || s >= 500,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid fetch spec: {0}")]
    InvalidSpec(String),
    #[error("{app_id} page {page}: giving up after {attempts} attempt(s), last error: {last}")]
    Transport { app_id: String, page: usize, attempts: u32, last: TransportError },
    #[error("{app_id} page {page}: cannot parse response ({reason}); payload starts {excerpt:?}")]
    Parse { app_id: String, page: usize, reason: String, excerpt: String },
    #[error("fixture {}: {reason}", path.display())]
    Fixture { path: PathBuf, reason: String },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

pub(crate) const EXCERPT_CHARS: usize = 160;

pub(crate) fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}
