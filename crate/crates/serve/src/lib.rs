//! JSON-over-HTTP backend for annotation and triage: classify text, page
//! through the unlabeled queue with model suggestions, record labels, export
//! the labeled corpus and retrain. Endpoints are documented in `openapi.yaml`.

pub mod api;
mod app;
pub mod config;
pub mod store;

pub use app::{classify, router, run, ApiError, AppState};
pub use config::ServeConfig;
pub use store::{AnnotationStore, QueuePolicy};
