//! Core data model and pure pipeline stages for mining app-store reviews.
//!
//! The crate is split the same way the pipeline runs:
//!
//! - [`corpus`]: review records, corpus persistence, statistics and splitting
//! - [`textprep`]: normalization, cleaning, word tokenization and stopword removal
//! - [`encode`]: subword tokenization into fixed-length model inputs
//! - [`metrics`]: confusion matrices, the four-metric evaluation suite and comparison tables
//!
//! Everything here is deterministic and free of I/O beyond explicit file
//! load/save calls, so it also compiles for `wasm32-unknown-unknown`.

pub mod corpus;
pub mod encode;
pub mod hashing;
pub mod metrics;
pub mod prediction;
pub mod textprep;

pub use corpus::{Corpus, CorpusError, Format, Label, RecordId, ReviewRecord};
pub use prediction::Prediction;
