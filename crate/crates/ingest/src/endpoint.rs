use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::spec::{FetchSpec, Sort};
use crate::transport::Request;

/// One review as a store page delivers it, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReview {
    pub user: String,
    pub rating: i64,
    pub text: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Page {
    pub reviews: Vec<RawReview>,
    /// Entries that did not have the review shape at all.
    pub malformed: usize,
    pub next: Option<String>,
}

/// Where pages live and how they read.
pub trait Endpoint: Send + Sync {
    /// Request for page `page` (1-based); `cursor` is the previous page's `next`.
    fn page_request(&self, spec: &FetchSpec, page: usize, cursor: Option<&str>, count: usize) -> Request;

    fn parse_page(&self, page: usize, body: &str) -> Result<Page, String>;

    /// Whether a 404 after the first page ends the listing.
    fn not_found_ends(&self) -> bool {
        true
    }
}

/// Numbered pages, each a JSON list of [`RawReview`] or an object
/// `{"reviews": [...]}`. An empty page or a 404 ends the listing.
#[derive(Debug, Clone)]
pub struct JsonPages {
    pub base_url: String,
}

impl JsonPages {
    pub fn new(base_url: impl Into<String>) -> Self {
        JsonPages { base_url: base_url.into() }
    }

    /// For [`crate::FixtureTransport`], which ignores the URL.
    pub fn fixture() -> Self {
        JsonPages::new("fixture:")
    }
}

impl Endpoint for JsonPages {
    fn page_request(&self, spec: &FetchSpec, page: usize, _cursor: Option<&str>, count: usize) -> Request {
        Request::get(&self.base_url)
            .param("app", &spec.app_id)
            .param("page", page)
            .param("count", count)
            .param("locale", &spec.locale)
            .param("sort", spec.sort)
    }

    fn parse_page(&self, page: usize, body: &str) -> Result<Page, String> {
        let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
        let items = match v {
            Value::Array(items) => items,
            Value::Object(mut map) => match map.remove("reviews") {
                Some(Value::Array(items)) => items,
                _ => return Err("object page without a `reviews` list".into()),
            },
            _ => return Err("page is neither a list nor an object".into()),
        };
        let mut out = Page::default();
        for item in items {
            match serde_json::from_value::<RawReview>(item) {
                Ok(r) => out.reviews.push(r),
                Err(e) => {
                    log::warn!("page {page}: skipping malformed entry: {e}");
                    out.malformed += 1;
                }
            }
        }
        if !out.reviews.is_empty() || out.malformed > 0 {
            out.next = Some((page + 1).to_string());
        }
        Ok(out)
    }
}

pub const PLAY_BATCHEXECUTE: &str = "https://play.google.com/_/PlayStoreUi/data/batchexecute";
const PLAY_RPC: &str = "UsvDTd";

/// The Play Store web client's review RPC. Unofficial and liable to change,
/// which is why it sits behind [`Endpoint`].
#[derive(Debug, Clone)]
pub struct PlayStore {
    pub url: String,
}

impl Default for PlayStore {
    fn default() -> Self {
        PlayStore { url: PLAY_BATCHEXECUTE.to_string() }
    }
}

fn sort_code(sort: Sort) -> u8 {
    match sort {
        Sort::Relevance => 1,
        Sort::Newest => 2,
        Sort::Rating => 3,
    }
}

impl PlayStore {
    pub fn envelope(spec: &FetchSpec, cursor: Option<&str>, count: usize) -> String {
        let inner = json!([null, null, [2, sort_code(spec.sort), [count, null, cursor], null, []], [spec.app_id, 7]]);
        json!([[[PLAY_RPC, inner.to_string(), null, "generic"]]]).to_string()
    }
}

fn review_from_row(row: &Value) -> Option<RawReview> {
    let user = row.get(1)?.get(0)?.as_str()?.to_string();
    let rating = row.get(2)?.as_i64()?;
    let text = row.get(4).and_then(Value::as_str).unwrap_or("").to_string();
    let timestamp = row.get(5).and_then(|t| t.get(0)).and_then(Value::as_i64).and_then(|s| DateTime::from_timestamp(s, 0));
    Some(RawReview { user, rating, text, timestamp })
}

impl Endpoint for PlayStore {
    fn page_request(&self, spec: &FetchSpec, _page: usize, cursor: Option<&str>, count: usize) -> Request {
        Request::post(&self.url)
            .param("hl", spec.language())
            .param("gl", spec.region())
            .form_field("f.req", PlayStore::envelope(spec, cursor, count))
    }

    fn parse_page(&self, page: usize, body: &str) -> Result<Page, String> {
        let json = body.trim_start().strip_prefix(")]}'").ok_or("missing the )]}' guard prefix")?;
        let outer: Value = serde_json::from_str(json.trim()).map_err(|e| e.to_string())?;
        let frames = outer.as_array().ok_or("envelope is not a list")?;
        let frame = frames
            .iter()
            .find(|f| f.get(0).and_then(Value::as_str) == Some("wrb.fr") && f.get(1).and_then(Value::as_str) == Some(PLAY_RPC))
            .ok_or("no review frame in envelope")?;
        let payload = match frame.get(2) {
            Some(Value::String(s)) => s,
            // the store answers a null payload once the listing is exhausted
            _ => return Ok(Page::default()),
        };
        let data: Value = serde_json::from_str(payload).map_err(|e| format!("frame payload: {e}"))?;
        let mut out = Page::default();
        if let Some(rows) = data.get(0).and_then(Value::as_array) {
            for row in rows {
                match review_from_row(row) {
                    Some(r) => out.reviews.push(r),
                    None => {
                        log::warn!("page {page}: skipping review row of unexpected shape");
                        out.malformed += 1;
                    }
                }
            }
        }
        // the cursor is the last string of a trailing [.., token] pair; its
        // position has moved between client versions, so look from the end
        out.next = data
            .as_array()
            .into_iter()
            .flat_map(|a| a.iter().skip(1).rev())
            .filter_map(Value::as_array)
            .find_map(|a| a.last().and_then(Value::as_str))
            .map(str::to_string);
        Ok(out)
    }

    fn not_found_ends(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn play_body(rows: Value, token: Option<&str>) -> String {
        let data = json!([rows, [null, token]]);
        let frames = json!([["wrb.fr", PLAY_RPC, data.to_string(), null, null, null, "generic"], ["di", 42]]);
        format!(")]}}'\n\n{frames}")
    }

    #[test]
    fn play_rows_and_cursor() {
        let rows = json!([
            ["gp:1", ["Ana", [null]], 2, null, "Crashes on export", [1700000000, 0]],
            ["gp:2", ["Bo", [null]], 5, null, "Love it", [1700000100, 0]],
            ["gp:3", null]
        ]);
        let page = PlayStore::default().parse_page(1, &play_body(rows, Some("tok-2"))).unwrap();
        assert_eq!(page.reviews.len(), 2);
        assert_eq!(page.malformed, 1);
        assert_eq!(page.reviews[0].user, "Ana");
        assert_eq!(page.reviews[0].rating, 2);
        assert_eq!(page.reviews[0].timestamp.unwrap().timestamp(), 1_700_000_000);
        assert_eq!(page.next.as_deref(), Some("tok-2"));
        let last = PlayStore::default().parse_page(2, &play_body(json!([]), None)).unwrap();
        assert_eq!(last.next, None);
    }

    #[test]
    fn play_request_shape() {
        let spec = FetchSpec::new("com.example.app", 10).unwrap().with_locale("pt-BR").unwrap();
        let req = PlayStore::default().page_request(&spec, 2, Some("abc"), 40);
        assert_eq!(req.query_value("hl"), Some("pt"));
        assert_eq!(req.query_value("gl"), Some("br"));
        let env: Value = serde_json::from_str(&req.form[0].1).unwrap();
        let inner: Value = serde_json::from_str(env[0][0][1].as_str().unwrap()).unwrap();
        assert_eq!(inner[2][2], json!([40, null, "abc"]));
        assert_eq!(inner[3][0], "com.example.app");
    }

    #[test]
    fn play_garbage_is_a_parse_error() {
        assert!(PlayStore::default().parse_page(1, "<html>").is_err());
    }

    #[test]
    fn json_pages_both_shapes() {
        let e = JsonPages::fixture();
        let list = e.parse_page(1, r#"[{"user":"a","rating":3,"text":"ok"}]"#).unwrap();
        assert_eq!(list.reviews.len(), 1);
        assert_eq!(list.next.as_deref(), Some("2"));
        let obj = e.parse_page(1, r#"{"reviews":[{"user":"a","rating":"x","text":"ok"}]}"#).unwrap();
        assert_eq!((obj.reviews.len(), obj.malformed), (0, 1));
        assert!(e.parse_page(3, "[]").unwrap().next.is_none());
        assert!(e.parse_page(1, "{}").is_err());
    }
}
