//! Request executors. Endpoints describe what to ask for; transports carry it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

use crate::error::TransportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub method: Method,
    pub url: String,
    pub query: Vec<(String, String)>,
    /// Form-encoded body, POST only.
    pub form: Vec<(String, String)>,
    /// Minimum spacing from the previous request on the same transport.
    pub pace: Duration,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Self {
        Request { method: Method::Get, url: url.into(), query: Vec::new(), form: Vec::new(), pace: Duration::ZERO }
    }

    pub fn post(url: impl Into<String>) -> Self {
        Request { method: Method::Post, ..Request::get(url) }
    }

    pub fn param(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.query.push((key.to_string(), value.to_string()));
        self
    }

    pub fn form_field(mut self, key: &str, value: impl Into<String>) -> Self {
        self.form.push((key.to_string(), value.into()));
        self
    }

    pub fn query_value(&self, key: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: String,
    /// Wall-clock receipt time; recorded transports leave it empty so their
    /// output stays a pure function of the recording.
    pub received_at: Option<DateTime<Utc>>,
}

impl Response {
    pub fn ok(body: impl Into<String>) -> Self {
        Response { status: 200, body: body.into(), received_at: None }
    }

    pub fn with_status(status: u16, body: impl Into<String>) -> Self {
        Response { status, body: body.into(), received_at: None }
    }
}

pub trait Transport: Send + Sync {
    /// Executes one request. Non-2xx statuses come back as responses; only
    /// failures to obtain any response are errors.
    fn execute(&self, request: &Request) -> Result<Response, TransportError>;
}

/// Spaces requests from any number of threads by reserving send slots.
#[derive(Debug, Default)]
pub struct RateLimiter {
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new() -> Self {
        RateLimiter::default()
    }

    /// Blocks until at least `interval` has passed since the previous slot.
    pub fn wait(&self, interval: Duration) -> Instant {
        let now = Instant::now();
        let slot = {
            let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
            let slot = match *last {
                Some(prev) => (prev + interval).max(now),
                None => now,
            };
            *last = Some(slot);
            slot
        };
        if slot > now {
            std::thread::sleep(slot - now);
        }
        slot
    }
}

/// Live HTTP over a shared agent and rate limiter.
pub struct HttpTransport {
    agent: ureq::Agent,
    limiter: RateLimiter,
}

pub const USER_AGENT: &str = concat!("elicit-ingest/", env!("CARGO_PKG_VERSION"));

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(USER_AGENT)
            .build()
            .into();
        HttpTransport { agent, limiter: RateLimiter::new() }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        self.limiter.wait(request.pace);
        let pairs = request.query.iter().map(|(k, v)| (k.as_str(), v.as_str()));
        let result = match request.method {
            Method::Get => self.agent.get(&request.url).query_pairs(pairs).call(),
            Method::Post => self
                .agent
                .post(&request.url)
                .query_pairs(pairs)
                .send_form(request.form.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
        };
        let mut response = result.map_err(|e| TransportError::network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError { status: Some(status), message: format!("reading body: {e}") })?;
        Ok(Response { status, body, received_at: Some(Utc::now()) })
    }
}

/// Recorded pages on disk: `<dir>/<n>.json`, or `<dir>/<app>/<n>.json` when
/// the per-app directory exists. Page numbers start at 1 and may be
/// zero-padded. A page that does not exist answers 404.
///
/// Requests must carry `app` and `page` query parameters, as
/// [`crate::JsonPages`] requests do.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn pages_dir(&self, app: Option<&str>) -> PathBuf {
        match app {
            Some(app) if self.dir.join(app).is_dir() => self.dir.join(app),
            _ => self.dir.clone(),
        }
    }

    /// Page files by number.
    pub fn pages(&self, app: Option<&str>) -> std::io::Result<BTreeMap<usize, PathBuf>> {
        let mut pages = BTreeMap::new();
        for entry in std::fs::read_dir(self.pages_dir(app))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            if let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) {
                pages.insert(n, path);
            }
        }
        Ok(pages)
    }
}

impl Transport for FixtureTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let page: usize = request
            .query_value("page")
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| TransportError::network("fixture request without a page number"))?;
        let pages = self
            .pages(request.query_value("app"))
            .map_err(|e| TransportError::network(format!("{}: {e}", self.dir.display())))?;
        match pages.get(&page) {
            Some(path) => std::fs::read_to_string(path)
                .map(Response::ok)
                .map_err(|e| TransportError::network(format!("{}: {e}", path.display()))),
            None => Ok(Response::with_status(404, format!("no page {page}"))),
        }
    }
}

type Handler = dyn Fn(&Request, usize) -> Result<Response, TransportError> + Send + Sync;

/// In-memory transport for tests. The handler sees each request and its
/// zero-based call index; every request is recorded.
pub struct MockTransport {
    handler: Box<Handler>,
    log: Mutex<Vec<Request>>,
}

impl MockTransport {
    pub fn new(handler: impl Fn(&Request, usize) -> Result<Response, TransportError> + Send + Sync + 'static) -> Self {
        MockTransport { handler: Box::new(handler), log: Mutex::new(Vec::new()) }
    }

    /// Serves `pages[n - 1]` for `page=n` and 404 past the end.
    pub fn pages(pages: Vec<String>) -> Self {
        MockTransport::new(move |req, _| {
            let n: usize = req.query_value("page").and_then(|p| p.parse().ok()).unwrap_or(0);
            Ok(match n.checked_sub(1).and_then(|i| pages.get(i)) {
                Some(body) => Response::ok(body.clone()),
                None => Response::with_status(404, ""),
            })
        })
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Transport for MockTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let index = {
            let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
            log.push(request.clone());
            log.len() - 1
        };
        (self.handler)(request, index)
    }
}
