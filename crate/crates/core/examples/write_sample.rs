//! Regenerates the bundled sample data:
//!
//! ```text
//! cargo run -p elicit-core --example write_sample -- data/sample
//! ```
//!
//! Writes a labeled corpus, recorded store pages holding the same reviews
//! without labels, and the label file that puts them back.

use std::path::PathBuf;

use elicit_core::corpus::{save_corpus, synthetic::keyword_corpus};
use elicit_core::Format;
use serde_json::json;

const PAGE_SIZE: usize = 20;

fn package(app: &str) -> String {
    format!("com.example.{}", app.to_lowercase())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/sample".into()));
    let corpus = keyword_corpus(200, 11).with_name("sample-reviews");
    std::fs::create_dir_all(&out)?;
    save_corpus(&corpus, &out.join("reviews.jsonl"), Format::Jsonl)?;

    let mut labels = String::from("record_id,label\n");
    let mut by_app: std::collections::BTreeMap<&str, Vec<serde_json::Value>> = Default::default();
    for r in corpus.iter() {
        labels.push_str(&format!("{},{}\n", r.record_id, r.target_variable.expect("labeled")));
        by_app.entry(&r.app_name).or_default().push(json!({
            "user": r.username,
            "rating": r.app_rating_given,
            "text": r.review_description,
        }));
    }
    std::fs::write(out.join("labels.csv"), labels)?;
    for (app, reviews) in by_app {
        let dir = out.join("fixture").join(package(app));
        std::fs::create_dir_all(&dir)?;
        for (i, chunk) in reviews.chunks(PAGE_SIZE).enumerate() {
            std::fs::write(dir.join(format!("{:03}.json", i + 1)), serde_json::to_string_pretty(chunk)? + "\n")?;
        }
    }
    println!("wrote {} reviews to {}", corpus.len(), out.display());
    Ok(())
}
