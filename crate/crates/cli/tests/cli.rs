mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::*;
use elicit_core::corpus::synthetic::keyword_corpus;
use elicit_core::corpus::{load_corpus, save_corpus};
use elicit_core::{Format, Label, Prediction};
use serde_json::Value;

fn corpus_file(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join("corpus.jsonl");
    save_corpus(&keyword_corpus(n, seed), &path, Format::Jsonl).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&elicit(&["--help"])), 0);
    assert_eq!(code(&elicit(&["--version"])), 0);
    let help = stdout(&elicit(&["train", "--help"]));
    assert!(help.contains("--batch-size") && help.contains("--raw-to-model"));
    assert!(stdout(&elicit(&["--help"])).contains("Exit codes"));
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["split", "--in"],
        vec!["split", "--in", "x.jsonl", "--bogus"],
        vec!["report", "--reports", "a.json", "--averaging", "median"],
        vec!["ingest", "--out", "x.jsonl"],
        vec!["eval", "--gold", "g.jsonl"],
    ] {
        assert_eq!(code(&elicit(&args)), 64, "{args:?}");
    }
}

#[test]
fn missing_artifacts_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = elicit(&["split", "--in", s(&missing)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));

    let gold = corpus_file(dir.path(), 20, 1);
    let ckpt = dir.path().join("no-checkpoint");
    let out = elicit(&["eval", "--checkpoint", s(&ckpt), "--gold", s(&gold)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(s(&ckpt)));

    let out = elicit(&["--config", s(&dir.path().join("elicit.toml")), "split", "--in", s(&gold)]);
    assert_eq!(code(&out), 2);
    let out = elicit(&["ingest", "--app", "a.b", "--fixture", s(&dir.path().join("pages")), "--out", s(&gold)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validation_failures_exit_3_with_record_detail() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        concat!(
            r#"{"AppName":"A","Username":"u1","app_rating_given":3,"review_description":"fine","target_variable":"useful"}"#,
            "\n",
            r#"{"AppName":"A","Username":"u2","app_rating_given":9,"review_description":"bad rating","target_variable":"useful"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = elicit(&["prep", "--in", s(&bad), "--out", s(&dir.path().join("p.jsonl"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));

    let good = corpus_file(dir.path(), 40, 2);
    let out = elicit(&["split", "--in", s(&good), "--frac", "1.5"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let out = elicit_env(&["split", "--in", s(&good)], &[("ELICIT_FRAC", "most")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("ELICIT_FRAC"));

    let out = elicit(&["train", "--train", s(&good), "--model", "bert-family", "--out", s(&dir.path().join("ck"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("--pretrained"));

    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "record_id,label\nabc,maybe\n").unwrap();
    let out = elicit(&["label", "--in", s(&good), "--labels", s(&labels), "--out", s(&dir.path().join("l.jsonl"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 2"));

    let cfg = dir.path().join("elicit.toml");
    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    assert_eq!(code(&elicit(&["--config", s(&cfg), "split", "--in", s(&good)])), 3);
    std::fs::write(&cfg, "schema_version = 7\n").unwrap();
    assert_eq!(code(&elicit(&["--config", s(&cfg), "split", "--in", s(&good)])), 3);
}

#[test]
fn broken_source_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let pages = dir.path().join("pages");
    std::fs::create_dir_all(&pages).unwrap();
    std::fs::write(pages.join("001.json"), "{not json").unwrap();
    let out = elicit(&["ingest", "--app", "com.example.x", "--fixture", s(&pages), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("page 1"));
}

#[test]
fn internal_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus_file(dir.path(), 20, 3);
    let out_dir = dir.path().join("split");
    std::fs::create_dir_all(out_dir.join("train.jsonl")).unwrap();
    let out = elicit(&["split", "--in", s(&input), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn split_seventy_thirty() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus_file(dir.path(), 100, 4);
    ok(&["split", "--in", s(&input), "--frac", "0.7", "--seed", "42"]);
    let train = load_corpus(&dir.path().join("train.jsonl"), Format::Jsonl).unwrap();
    let test = load_corpus(&dir.path().join("test.jsonl"), Format::Jsonl).unwrap();
    assert_eq!((train.len(), test.len()), (70, 30));
    assert_eq!(train.label_counts().get(Label::Useful), 35);

    let m = read_json(&dir.path().join("elicit-split.manifest.json"));
    assert_eq!(m["subcommand"], "split");
    assert_eq!(m["config"]["split.frac"]["source"], "flag");
    assert_eq!(m["config"]["seed"]["value"], 42);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["role"].as_str().unwrap()).collect();
    assert_eq!(outputs, ["train", "test"]);
    assert!(m["inputs"][0]["sha256"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn settings_precedence_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus_file(dir.path(), 100, 5);
    let cfg = dir.path().join("elicit.toml");
    std::fs::write(&cfg, "schema_version = 1\nseed = 9\n[split]\nfrac = 0.6\n").unwrap();
    let manifest = dir.path().join("m.json");
    let run = |extra: &[&str], env: &[(&str, &str)]| {
        let mut args = vec!["--config", s(&cfg), "--manifest", s(&manifest), "split", "--in", s(&input)];
        args.extend_from_slice(extra);
        let out = elicit_env(&args, env);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let m = read_json(&manifest);
        (m["config"]["split.frac"].clone(), m["config"]["seed"].clone())
    };
    let (frac, seed) = run(&[], &[]);
    assert_eq!((frac["value"].as_f64(), frac["source"].as_str()), (Some(0.6), Some("file")));
    assert_eq!((seed["value"].as_u64(), seed["source"].as_str()), (Some(9), Some("file")));
    let (frac, seed) = run(&[], &[("ELICIT_FRAC", "0.8"), ("ELICIT_SEED", "5")]);
    assert_eq!((frac["value"].as_f64(), frac["source"].as_str()), (Some(0.8), Some("env")));
    assert_eq!(seed["source"], "env");
    let (frac, _) = run(&["--frac", "0.7"], &[("ELICIT_FRAC", "0.8")]);
    assert_eq!((frac["value"].as_f64(), frac["source"].as_str()), (Some(0.7), Some("flag")));
    assert_eq!(load_corpus(&dir.path().join("train.jsonl"), Format::Jsonl).unwrap().len(), 70);
    let out = elicit(&["split", "--in", s(&input), "--manifest", s(&manifest)]);
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&manifest)["config"]["split.frac"]["source"], "default");
}

#[test]
fn eval_on_perfect_predictions_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let gold = corpus_file(dir.path(), 30, 6);
    let corpus = load_corpus(&gold, Format::Jsonl).unwrap();
    let preds: String = corpus
        .iter()
        .map(|r| {
            let p = Prediction::from_score(r.record_id.clone(), if r.label() == Some(Label::Useful) { 0.9 } else { 0.1 }, 0.5);
            serde_json::to_string(&p).unwrap() + "\n"
        })
        .collect();
    let pred_path = dir.path().join("preds.jsonl");
    std::fs::write(&pred_path, preds).unwrap();
    let out_dir = dir.path().join("eval");
    ok(&["eval", "--pred", s(&pred_path), "--gold", s(&gold), "--out", s(&out_dir)]);
    let report = read_json(&out_dir.join("report.json"));
    for mode in ["positive_class", "macro", "weighted"] {
        for metric in ["accuracy", "precision", "recall", "f1"] {
            assert_eq!(report[mode][metric].as_f64(), Some(1.0), "{mode} {metric}");
        }
    }
    assert!(out_dir.join("elicit-eval.manifest.json").exists());

    std::fs::write(&pred_path, "{\"record_id\":\"x\",\"predicted_label\":\"useful\",\"score\":0.9}\n").unwrap();
    assert_eq!(code(&elicit(&["eval", "--pred", s(&pred_path), "--gold", s(&gold), "--out", s(&out_dir)])), 3);
}

#[test]
fn report_has_one_row_per_input_and_a_chart() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (name, m) in [("a", [5, 1, 1, 5]), ("b", [6, 0, 0, 6]), ("c", [4, 2, 2, 4])] {
        let r = elicit_core::metrics::EvalReport::new(name, elicit_core::metrics::ConfusionMatrix::new(m[0], m[1], m[2], m[3]));
        let p = dir.path().join(format!("{name}.json"));
        std::fs::write(&p, serde_json::to_string(&r).unwrap()).unwrap();
        paths.push(p);
    }
    let out_dir = dir.path().join("report");
    let mut args = vec!["report", "--reports"];
    args.extend(paths.iter().map(|p| s(p)));
    args.extend(["--out", s(&out_dir)]);
    let printed = ok(&args);
    let table = read_json(&out_dir.join("table.json"));
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
    assert!(printed.contains("Accuracy (%)") && printed.contains("F1-Score (%)"));
    let svg = std::fs::read_to_string(out_dir.join("metric_comparison.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);

    args.push("--with-reference");
    let printed = ok(&args);
    assert!(printed.contains("GEMMA") && printed.contains("92.69"));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn post_json(port: u16, path: &str, body: &str) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    write!(
        stream,
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw)?;
    let status = raw.split(' ').nth(1).and_then(|c| c.parse().ok()).unwrap_or(0);
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok((status, body))
}

#[test]
fn classify_matches_the_http_service() {
    let dir = tempfile::tempdir().unwrap();
    let train = corpus_file(dir.path(), 120, 7);
    let ckpt = dir.path().join("ckpt");
    ok(&[
        "train",
        "--train",
        s(&train),
        "--model",
        "tiny-stub",
        "--epochs",
        "3",
        "--lr",
        "2e-3",
        "--batch-size",
        "8",
        "--out",
        s(&ckpt),
    ]);

    let texts =
        ["The app crashes when I upload a photo", "Love it thanks!", "it is the", "<b>Please add</b> dark mode https://x.io"];
    let input = dir.path().join("texts.txt");
    std::fs::write(&input, texts.join("\n")).unwrap();
    let cli: Vec<Value> =
        ok(&["classify", "--checkpoint", s(&ckpt), "--in", s(&input), "--json", "--manifest", s(&dir.path().join("m.json"))])
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    assert_eq!(cli.len(), texts.len());
    let plain = ok(&["classify", "--checkpoint", s(&ckpt), "--in", s(&input), "--manifest", s(&dir.path().join("m.json"))]);
    let first: Vec<&str> = plain.lines().next().unwrap().split('\t').collect();
    assert_eq!(first[0], cli[0]["label"]);

    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_elicit"))
        .args(["serve", "--port", &port.to_string(), "--store", s(&dir.path().join("store.sqlite")), "--checkpoint", s(&ckpt)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let mut http = Vec::new();
    for text in texts {
        let body = serde_json::json!({ "text": text }).to_string();
        let resp = loop {
            match post_json(port, "/classify", &body) {
                Ok(r) => break r,
                Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(100)),
                Err(e) => {
                    let _ = child.kill();
                    panic!("service did not come up: {e}");
                }
            }
        };
        assert_eq!(resp.0, 200, "{}", resp.1);
        http.push(serde_json::from_str::<Value>(&resp.1).unwrap());
    }
    let _ = child.kill();
    let _ = child.wait();
    assert_eq!(cli, http);
    assert!(dir.path().join("elicit-serve.manifest.json").exists());
}

#[test]
fn ingest_label_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let source = keyword_corpus(60, 8);
    let apps = write_fixture(&dir.path().join("pages"), &source, 7);
    let raw = dir.path().join("raw.csv");
    let mut argv: Vec<String> =
        vec!["ingest".into(), "--fixture".into(), s(&dir.path().join("pages")).into(), "--out".into(), s(&raw).into()];
    for a in &apps {
        argv.extend(["--app".to_string(), a.clone()]);
    }
    let argv_ref: Vec<&str> = argv.iter().map(String::as_str).collect();
    ok(&argv_ref);
    let ingested = load_corpus(&raw, Format::Csv).unwrap();
    assert_eq!(ingested.len(), 60);
    // recorded pages carry no receive time, so fixture ingest is reproducible
    assert!(ingested.iter().all(|r| r.label().is_none() && r.fetched_at.is_none()));
    assert_eq!(ingested.app_distribution(), source.app_distribution());

    let labels = dir.path().join("labels.csv");
    write_keyword_labels(&ingested, &labels);
    let labeled = dir.path().join("labeled.jsonl");
    ok(&["label", "--in", s(&raw), "--labels", s(&labels), "--require-all", "--out", s(&labeled)]);
    let labeled = load_corpus(&labeled, Format::Jsonl).unwrap();
    let by_id: std::collections::HashMap<_, _> = source.iter().map(|r| (r.record_id.clone(), r.label())).collect();
    assert!(labeled.iter().all(|r| by_id[&r.record_id] == r.label()));

    let partial = dir.path().join("partial.csv");
    std::fs::write(&partial, format!("record_id,label\n{},useful\n", labeled.records()[0].record_id)).unwrap();
    let out =
        elicit(&["label", "--in", s(&raw), "--labels", s(&partial), "--require-all", "--out", s(&dir.path().join("x.jsonl"))]);
    assert_eq!(code(&out), 3);

    let anon = dir.path().join("anon.jsonl");
    let mut anon_args = argv_ref.clone();
    anon_args[4] = s(&anon);
    anon_args.push("--anonymize");
    ok(&anon_args);
    let anon = load_corpus(&anon, Format::Jsonl).unwrap();
    assert!(anon.iter().all(|r| r.username.starts_with("user-") && r.username.len() == 21));
}

/// Every artifact of prep, split, train, eval and report on the bundled
/// sample is byte-identical across two runs; only the run manifests differ.
#[test]
fn pipeline_artifacts_are_byte_stable() {
    let sample = sample_dir().join("reviews.jsonl");
    let run = |root: &Path| {
        let p = |name: &str| root.join(name);
        ok(&["prep", "--in", s(&sample), "--out", s(&p("prepared.jsonl"))]);
        ok(&["split", "--in", s(&sample), "--out", s(root)]);
        ok(&[
            "train",
            "--train",
            s(&p("train.jsonl")),
            "--test",
            s(&p("test.jsonl")),
            "--model",
            "tiny-stub",
            "--epochs",
            "2",
            "--lr",
            "2e-3",
            "--batch-size",
            "8",
            "--out",
            s(&p("ckpt")),
        ]);
        ok(&["eval", "--checkpoint", s(&p("ckpt")), "--gold", s(&p("test.jsonl")), "--out", s(&p("eval"))]);
        ok(&["report", "--reports", s(&p("eval/report.json")), "--corpus", s(&sample), "--out", s(&p("report"))]);
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    let mut compared = 0;
    for entry in walk(a.path()) {
        let rel = entry.strip_prefix(a.path()).unwrap();
        let name = rel.file_name().unwrap().to_string_lossy();
        if name.ends_with(".manifest.json") {
            continue;
        }
        assert_eq!(std::fs::read(&entry).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
        compared += 1;
    }
    assert!(compared >= 15, "{compared}");
    for sub in ["prep", "split", "eval", "report"] {
        let m =
            walk(a.path()).into_iter().filter(|p| p.to_string_lossy().ends_with(&format!("elicit-{sub}.manifest.json"))).count();
        assert_eq!(m, 1, "{sub}");
    }
    assert!(a.path().join("ckpt/elicit-train.manifest.json").exists());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}
