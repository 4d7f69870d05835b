#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use elicit_core::corpus::synthetic::USEFUL_KEYWORDS;
use elicit_core::{Corpus, ReviewRecord};

pub fn elicit(args: &[&str]) -> Output {
    elicit_env(args, &[])
}

/// Runs the binary with a clean `ELICIT_*` environment plus `env`.
pub fn elicit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_elicit"));
    for (k, _) in std::env::vars() {
        if k.starts_with("ELICIT_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Asserts success and returns stdout.
#[track_caller]
pub fn ok(args: &[&str]) -> String {
    let out = elicit(args);
    assert_eq!(code(&out), 0, "elicit {args:?}\nstdout:\n{}\nstderr:\n{}", stdout(&out), stderr(&out));
    stdout(&out)
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn package(app: &str) -> String {
    format!("com.example.{}", app.to_lowercase())
}

/// Writes `corpus` as recorded store pages, one directory per app, and
/// returns the `--app` arguments that read them back under the same names.
pub fn write_fixture(dir: &Path, corpus: &Corpus, page_size: usize) -> Vec<String> {
    let mut by_app: BTreeMap<&str, Vec<serde_json::Value>> = BTreeMap::new();
    for r in corpus.iter() {
        by_app.entry(&r.app_name).or_default().push(serde_json::json!({
            "user": r.username,
            "rating": r.app_rating_given,
            "text": r.review_description,
        }));
    }
    let mut apps = Vec::new();
    for (app, reviews) in by_app {
        let d = dir.join(package(app));
        std::fs::create_dir_all(&d).unwrap();
        for (i, chunk) in reviews.chunks(page_size).enumerate() {
            std::fs::write(d.join(format!("{:03}.json", i + 1)), serde_json::to_string(chunk).unwrap()).unwrap();
        }
        apps.push(format!("{}={app}", package(app)));
    }
    apps
}

/// Labels by the keyword rule the synthetic corpus was generated with.
pub fn keyword_label(r: &ReviewRecord) -> &'static str {
    if USEFUL_KEYWORDS.iter().any(|k| r.review_description.contains(k)) {
        "useful"
    } else {
        "not_useful"
    }
}

pub fn write_keyword_labels(corpus: &Corpus, path: &Path) {
    let mut text = String::from("record_id,label\n");
    for r in corpus.iter() {
        text.push_str(&format!("{},{}\n", r.record_id, keyword_label(r)));
    }
    std::fs::write(path, text).unwrap();
}

pub fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}
