//! Review ingestion: page through a store endpoint, or a recorded copy of
//! one, and turn what comes back into unlabeled review records.
//!
//! An [`Endpoint`] knows how pages are requested and read; a [`Transport`]
//! carries requests. Tests run on [`FixtureTransport`] and [`MockTransport`];
//! [`HttpTransport`] is the only part that touches the network.

mod endpoint;
mod error;
mod fetch;
mod spec;
mod transport;

pub use endpoint::{Endpoint, JsonPages, Page, PlayStore, RawReview, PLAY_BATCHEXECUTE};
pub use error::{IngestError, Result, TransportError};
pub use fetch::{
    anonymize, anonymize_username, dedupe, fetch_many, fetch_reviews, FetchOutcome, FetchStats, RetryPolicy, ReviewStream,
};
pub use spec::{FetchSpec, Sort, DEFAULT_LOCALE, DEFAULT_PAGE_SIZE, DEFAULT_RATE_LIMIT};
pub use transport::{FixtureTransport, HttpTransport, Method, MockTransport, RateLimiter, Request, Response, Transport};
