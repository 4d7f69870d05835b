use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sort {
    #[default]
    Newest,
    Rating,
    Relevance,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Newest => "newest",
            Sort::Rating => "rating",
            Sort::Relevance => "relevance",
        })
    }
}

impl FromStr for Sort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "newest" => Ok(Sort::Newest),
            "rating" => Ok(Sort::Rating),
            "relevance" => Ok(Sort::Relevance),
            other => Err(format!("unknown sort `{other}` (newest, rating, relevance)")),
        }
    }
}

pub const DEFAULT_LOCALE: &str = "en-US";
pub const DEFAULT_RATE_LIMIT: f64 = 1.0;
pub const DEFAULT_PAGE_SIZE: usize = 100;

/// What to fetch for one app. Construct with [`FetchSpec::new`] and the
/// `with_*` setters, then call [`FetchSpec::validate`]; the fetchers do so too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchSpec {
    /// Store package identifier, e.g. `com.intsig.camscanner`.
    pub app_id: String,
    /// Name written to `AppName`; the package id when absent.
    #[serde(default)]
    pub app_name: Option<String>,
    pub max_reviews: usize,
    pub locale: String,
    pub sort: Sort,
    /// Requests per second.
    pub rate_limit: f64,
    pub page_size: usize,
}

impl FetchSpec {
    pub fn new(app_id: impl Into<String>, max_reviews: usize) -> Result<Self> {
        let spec = FetchSpec {
            app_id: app_id.into(),
            app_name: None,
            max_reviews,
            locale: DEFAULT_LOCALE.to_string(),
            sort: Sort::default(),
            rate_limit: DEFAULT_RATE_LIMIT,
            page_size: DEFAULT_PAGE_SIZE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_app_name(mut self, name: impl Into<String>) -> Self {
        self.app_name = Some(name.into());
        self
    }

    pub fn with_locale(mut self, locale: impl Into<String>) -> Result<Self> {
        self.locale = locale.into();
        self.validate().map(|_| self)
    }

    pub fn with_sort(mut self, sort: Sort) -> Self {
        self.sort = sort;
        self
    }

    pub fn with_rate_limit(mut self, per_second: f64) -> Result<Self> {
        self.rate_limit = per_second;
        self.validate().map(|_| self)
    }

    pub fn with_page_size(mut self, page_size: usize) -> Result<Self> {
        self.page_size = page_size;
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(IngestError::InvalidSpec(m));
        if self.app_id.trim().is_empty() {
            return fail("app_id is empty".into());
        }
        if self.max_reviews < 1 {
            return fail("max_reviews must be at least 1".into());
        }
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return fail(format!("rate_limit must be positive, got {}", self.rate_limit));
        }
        if self.page_size < 1 {
            return fail("page_size must be at least 1".into());
        }
        if !is_language_tag(&self.locale) {
            return fail(format!("locale `{}` is not a BCP-47 tag", self.locale));
        }
        Ok(())
    }

    pub fn display_name(&self) -> &str {
        self.app_name.as_deref().unwrap_or(&self.app_id)
    }

    /// Minimum spacing between two requests.
    pub fn request_interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.rate_limit)
    }

    pub fn language(&self) -> String {
        self.locale.split('-').next().unwrap_or("en").to_ascii_lowercase()
    }

    /// Two-letter region subtag, `us` when the tag has none.
    pub fn region(&self) -> String {
        self.locale
            .split('-')
            .skip(1)
            .find(|p| p.len() == 2 && p.chars().all(|c| c.is_ascii_alphabetic()))
            .unwrap_or("us")
            .to_ascii_lowercase()
    }
}

/// Structural check only: a 2-3 letter (or 5-8 letter) language subtag
/// followed by 1-8 character alphanumeric subtags.
fn is_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(lang) = parts.next() else { return false };
    let lang_ok = matches!(lang.len(), 2..=3 | 5..=8) && lang.chars().all(|c| c.is_ascii_alphabetic());
    lang_ok && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}
