//! One line per acceptance criterion. Run with
//! `cargo test -p elicit-cli --test acceptance`; exits nonzero on any FAIL.

#[path = "common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use elicit_core::corpus::synthetic::keyword_corpus;
use elicit_core::corpus::{load_corpus, split, to_jsonl_string, SplitOptions};
use elicit_core::encode::{encode, encode_corpus, EncodedExample, ModelFamily, SpecialRole, TextSource, TokenizerAdapter};
use elicit_core::metrics::{compute, confusion, Averaging, ConfusionMatrix, Exact, MetricSet};
use elicit_core::textprep::{prepare_text, PrepConfig};
use elicit_core::{Format, Label, Prediction, ReviewRecord};
use elicit_train::gradcheck::head_gradient_check;
use elicit_train::{evaluate_checkpoint, fine_tune, train_corpus, Model, ModelKind, TrainConfig, TrainRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use common::*;

const METRIC_TOL: f64 = 1e-12;
const METRIC_SETS: usize = 1000;
const METRIC_MAX_N: usize = 50;
const METRIC_BUDGET: Duration = Duration::from_secs(5);
const FUZZ_STRINGS: usize = 1000;
const PREP_BUDGET: Duration = Duration::from_secs(10);
const SEQ_LEN: usize = 128;
const MIN_ACCURACY: f64 = 0.95;
const STUB_BUDGET: Duration = Duration::from_secs(5 * 60);
const ENCODER_BUDGET: Duration = Duration::from_secs(15 * 60);
const GRAD_TOL: f64 = 1e-3;
const MAX_TRAINABLE_FRACTION: f64 = 0.05;
const E2E_BUDGET: Duration = Duration::from_secs(10 * 60);
const CHECKPOINT_ENV: &str = "ELICIT_ENCODER_CHECKPOINT";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

/// precision, recall, support, predicted
type ClassRow = (Option<f64>, Option<f64>, usize, usize);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(label: &str, elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed < budget, || format!("{label} took {elapsed:.1?}, budget {budget:?}"))
}

// ---------------------------------------------------------------- metrics

struct Case {
    pairs: Vec<(Label, Label)>,
}

fn random_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..METRIC_SETS)
        .map(|_| {
            let n = rng.random_range(0..=METRIC_MAX_N);
            let gold_rate: f64 = match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random(),
            };
            let hit_rate: f64 = match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random(),
            };
            let pairs = (0..n)
                .map(|_| {
                    let gold = if rng.random_bool(gold_rate) { Label::Useful } else { Label::NotUseful };
                    let pred = if rng.random_bool(hit_rate) { gold } else { other(gold) };
                    (pred, gold)
                })
                .collect();
            Case { pairs }
        })
        .collect()
}

fn other(l: Label) -> Label {
    match l {
        Label::Useful => Label::NotUseful,
        Label::NotUseful => Label::Useful,
    }
}

fn div(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Recounts `(pred, gold)` pairs from scratch for each averaging mode.
fn brute_force(pairs: &[(Label, Label)], mode: Averaging) -> MetricSet {
    let n = pairs.len();
    let correct = pairs.iter().filter(|(p, g)| p == g).count();
    let per_class: Vec<ClassRow> = [Label::Useful, Label::NotUseful]
        .iter()
        .map(|&c| {
            let hit = pairs.iter().filter(|&&(p, g)| p == c && g == c).count();
            let predicted = pairs.iter().filter(|&&(p, _)| p == c).count();
            let support = pairs.iter().filter(|&&(_, g)| g == c).count();
            (div(hit, predicted), div(hit, support), support, predicted)
        })
        .collect();
    let mean = |pick: &dyn Fn(&ClassRow) -> Option<f64>, weighted: bool| -> Option<f64> {
        let rows: Vec<_> = per_class.iter().filter(|c| if weighted { c.2 > 0 } else { c.2 > 0 || c.3 > 0 }).collect();
        if rows.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        let mut total = 0.0;
        for row in rows {
            let w = if weighted { row.2 as f64 } else { 1.0 };
            sum += pick(row)? * w;
            total += w;
        }
        Some(sum / total)
    };
    let (precision, recall) = match mode {
        Averaging::PositiveClass => (per_class[0].0, per_class[0].1),
        Averaging::Macro => (mean(&|c| c.0, false), mean(&|c| c.1, false)),
        Averaging::Weighted => (mean(&|c| c.0, true), mean(&|c| c.1, true)),
    };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet { accuracy: div(correct, n), precision, recall, f1 }
}

fn records_and_predictions(pairs: &[(Label, Label)]) -> (Vec<ReviewRecord>, Vec<Prediction>) {
    let gold: Vec<ReviewRecord> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(_, g))| ReviewRecord::new("App", format!("u{i}"), 3, format!("review number {i}"), Some(g)))
        .collect();
    let preds = gold
        .iter()
        .zip(pairs)
        .map(|(r, &(p, _))| Prediction::from_score(r.record_id.clone(), if p == Label::Useful { 0.9 } else { 0.1 }, 0.5))
        .collect();
    (gold, preds)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= METRIC_TOL,
        _ => false,
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let cases = random_cases(1);
    let mut values = 0;
    for (i, case) in cases.iter().enumerate() {
        let (gold, preds) = records_and_predictions(&case.pairs);
        let m = confusion(&preds, &gold).map_err(|e| format!("set {i}: {e}"))?;
        for mode in Averaging::ALL {
            let got = compute(&m, mode).to_f64();
            let want = brute_force(&case.pairs, mode);
            for (k, (g, w)) in got.values().into_iter().zip(want.values()).enumerate() {
                ensure(close(g, w), || {
                    format!("set {i} ({} pairs) {mode} metric {k}: got {g:?}, recount {w:?}", case.pairs.len())
                })?;
                values += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    within("metric sets", elapsed, METRIC_BUDGET)?;
    Ok(format!("{METRIC_SETS} sets, {values} values within {METRIC_TOL:e} in {elapsed:.2?}"))
}

fn criterion_2() -> Check {
    let cases = random_cases(1);
    for (i, case) in cases.iter().enumerate() {
        let m = ConfusionMatrix::from_pairs(case.pairs.iter().copied());
        let weighted = compute(&m, Averaging::Weighted);
        ensure(weighted.recall == weighted.accuracy, || {
            format!("set {i}: weighted recall {:?} != accuracy {:?}", weighted.recall, weighted.accuracy)
        })?;
    }
    let hand = compute(&ConfusionMatrix::new(3, 1, 2, 4), Averaging::PositiveClass);
    let got = [hand.accuracy, hand.precision, hand.recall, hand.f1];
    let want = [(7, 10), (3, 4), (3, 5), (2, 3)].map(|(n, d)| Some(Exact::new(n, d)));
    ensure(got == want, || format!("hand case {got:?}, expected {want:?}"))?;
    let f1 = hand.to_f64().f1.unwrap_or(f64::NAN);
    ensure(format!("{f1:.4}") == "0.6667", || format!("f1 rounds to {f1:.4}"))?;
    Ok(format!("identity on {} sets; tp=3 fp=1 fn=2 tn=4 -> 7/10 3/4 3/5 2/3", cases.len()))
}

// ---------------------------------------------------------- preprocessing

const PIECES: &[&str] = &[
    "The",
    "APP",
    "Crashes",
    "when",
    "I",
    "upload",
    "a",
    "photo",
    "Please",
    "ADD",
    "dark",
    "mode",
    "it's",
    "don't",
    "Wouldn't",
    "THE",
    "and",
    "of",
    "Café",
    "naïve",
    "ÜBER",
    "Straße",
    "日本語",
    "Ωmega",
    "😀",
    "👍🏽",
    "!!!",
    "?!",
    "...",
    ":)",
    "&amp;",
    "#1",
    "v2.3.1",
    "100%",
    "$5",
    "@dev",
    "e-mail",
    "https://Example.com/Path?q=1",
    "HTTP://SHOUT.ORG",
    "http://a.b/c#frag",
    "www.Store.IO/x",
    "<b>",
    "</B>",
    "<div class=\"X\">",
    "<br/>",
    "<a href='https://x.y'>",
    "<>",
    "a<b",
    "\t",
    "\n",
    "  ",
];

fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..24);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        let sep = [" ", " ", " ", "", "\n", ","][rng.random_range(0..6)];
        s.push_str(sep);
    }
    s
}

fn stopwords_from_file() -> HashSet<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/stopwords-nltk-english.txt");
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let config = PrepConfig::default();
    let stopwords = stopwords_from_file();
    let forbidden = [
        ("url", Regex::new(r"(?i)https?://").unwrap()),
        ("html", Regex::new(r"<[^>]+>").unwrap()),
        ("uppercase", Regex::new(r"\p{Lu}").unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tokens_seen = 0;
    for i in 0..FUZZ_STRINGS {
        let input = fuzz_string(&mut rng);
        let tokens = prepare_text(&input, &config).map_err(|e| e.to_string())?;
        let clean = tokens.join(" ");
        for (name, re) in &forbidden {
            ensure(!re.is_match(&clean), || format!("string {i} {input:?}: {name} survives in {clean:?}"))?;
        }
        if let Some(t) = tokens.iter().find(|t| stopwords.contains(t.as_str())) {
            return Err(format!("string {i} {input:?}: stopword `{t}` survives"));
        }
        let again = prepare_text(&clean, &config).map_err(|e| e.to_string())?;
        ensure(again == tokens, || format!("string {i} {input:?}: not idempotent, {tokens:?} then {again:?}"))?;
        tokens_seen += tokens.len();
    }
    let elapsed = start.elapsed();
    within("preprocessing fuzz", elapsed, PREP_BUDGET)?;
    Ok(format!("{FUZZ_STRINGS} strings, {tokens_seen} tokens clean and stable in {elapsed:.2?}"))
}

// ------------------------------------------------------------------ split

fn criterion_4() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = keyword_corpus(3200, 42);
    let input = dir.path().join("corpus.jsonl");
    std::fs::write(&input, to_jsonl_string(&corpus)).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = elicit(&["split", "--in", s(&input), "--frac", "0.7", "--seed", "42", "--out", s(&out)]);
        ensure(code(&o) == 0, || format!("split exited {}: {}", code(&o), stderr(&o)))?;
        let read = |name: &str| std::fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"));
        runs.push((read("train.jsonl")?, read("test.jsonl")?, out));
    }
    ensure(runs[0].0 == runs[1].0 && runs[0].1 == runs[1].1, || "two runs differ".into())?;
    let train = load_corpus(&runs[0].2.join("train.jsonl"), Format::Jsonl).map_err(|e| e.to_string())?;
    let test = load_corpus(&runs[0].2.join("test.jsonl"), Format::Jsonl).map_err(|e| e.to_string())?;
    ensure((train.len(), test.len()) == (2240, 960), || format!("sizes {}/{}", train.len(), test.len()))?;
    let count = |c: &elicit_core::Corpus, l: Label| c.iter().filter(|r| r.label() == Some(l)).count() as i64;
    for l in Label::ALL {
        let (tr, te) = (count(&train, l), count(&test, l));
        ensure((tr - 1120).abs() <= 1 && (te - 480).abs() <= 1, || format!("{l}: {tr}/{te}"))?;
    }
    Ok(format!(
        "2240/960, useful {}/{}, not_useful {}/{}, byte-identical across runs",
        count(&train, Label::Useful),
        count(&test, Label::Useful),
        count(&train, Label::NotUseful),
        count(&test, Label::NotUseful)
    ))
}

// --------------------------------------------------------------- encoding

fn check_shape(ex: &EncodedExample, adapter: &TokenizerAdapter) -> Result<(), String> {
    ensure(ex.token_ids.len() == SEQ_LEN && ex.attention_mask.len() == SEQ_LEN, || {
        format!("lengths {}/{}", ex.token_ids.len(), ex.attention_mask.len())
    })?;
    let real = ex.real_len();
    ensure(ex.attention_mask[..real].iter().all(|&m| m == 1), || "mask is not a prefix of ones".into())?;
    let pad = adapter.pad_id();
    for (i, (&id, &m)) in ex.token_ids.iter().zip(&ex.attention_mask).enumerate() {
        ensure((id == pad) == (m == 0), || format!("position {i}: id {id}, mask {m}"))?;
    }
    let start = adapter.special(SpecialRole::SequenceStart);
    ensure(Some(ex.token_ids[0]) == start, || format!("position 0 holds {}", ex.token_ids[0]))?;
    if adapter.family().is_encoder() {
        let sep = adapter.special(SpecialRole::Separator);
        ensure(real >= 2 && Some(ex.token_ids[real - 1]) == sep, || format!("separator missing at {}", real - 1))?;
        let inner = &ex.token_ids[1..real - 1];
        ensure(!inner.iter().any(|t| Some(*t) == start || Some(*t) == sep), || "framing token inside content".into())?;
    }
    Ok(())
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut texts: Vec<String> = (0..FUZZ_STRINGS).map(|_| fuzz_string(&mut rng)).collect();
    for k in [60, 126, 127, 200, 600] {
        texts.push(vec!["crashes"; k].join(" "));
    }
    texts.push(String::new());
    let vocab_src: Vec<String> = keyword_corpus(200, 11).iter().map(|r| r.review_description.to_lowercase()).collect();
    let mut truncated = 0;
    let mut checked = 0;
    for family in [ModelFamily::EncoderBase, ModelFamily::EncoderDistilled, ModelFamily::DecoderGemma] {
        let adapter = TokenizerAdapter::build(family, vocab_src.iter().map(String::as_str), 2000).map_err(|e| e.to_string())?;
        for (i, t) in texts.iter().enumerate() {
            let ex = encode(t, &adapter, SEQ_LEN).map_err(|e| format!("{family} text {i}: {e}"))?;
            check_shape(&ex, &adapter).map_err(|e| format!("{family} text {i}: {e}"))?;
            truncated += usize::from(ex.real_len() == SEQ_LEN);
            checked += 1;
        }
    }
    ensure(truncated >= 9, || format!("only {truncated} examples reached the length limit"))?;
    Ok(format!("{checked} examples over 3 families, {truncated} truncated, all length {SEQ_LEN}"))
}

// --------------------------------------------------------------- training

fn toy_split() -> elicit_core::corpus::SplitResult {
    split(&keyword_corpus(200, 11), SplitOptions::default()).expect("toy corpus splits")
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let s = toy_split();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut req = TrainRequest::new(ModelKind::TinyStub);
    req.config.learning_rate = 2e-3;
    req.config.batch_size = 8;
    let out = train_corpus(&s.train, &req, dir.path(), &mut |_| {}).map_err(|e| e.to_string())?;
    let losses = out.result.per_epoch_loss();
    ensure(losses.len() == 5, || format!("{} epochs", losses.len()))?;
    let (_, report) = evaluate_checkpoint(&out.checkpoint, &s.test, 0.5).map_err(|e| e.to_string())?;
    let acc = report.accuracy().unwrap_or(0.0);
    ensure(acc >= MIN_ACCURACY, || format!("test accuracy {acc:.4}"))?;
    ensure(losses[4] < losses[0], || format!("loss {losses:?}"))?;
    let elapsed = start.elapsed();
    within("tiny-stub training", elapsed, STUB_BUDGET)?;
    Ok(format!("accuracy {acc:.4} on {} test reviews, loss {:.4} -> {:.4}, {elapsed:.1?}", s.test.len(), losses[0], losses[4]))
}

fn criterion_7() -> Outcome {
    let Some(path) = std::env::var_os(CHECKPOINT_ENV).map(PathBuf::from) else {
        return Outcome::Skip(format!("set {CHECKPOINT_ENV} to a local BERT-layout checkpoint directory"));
    };
    let run = || -> Check {
        let start = Instant::now();
        let s = toy_split();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut req = TrainRequest::new(ModelKind::BertFamily);
        req.pretrained = Some(path.clone());
        let (batch, lr) = (req.config.batch_size, req.config.learning_rate);
        ensure(batch == 32 && lr == 2e-5 && req.config.epochs == 5, || "defaults drifted".into())?;
        let out = train_corpus(&s.train, &req, dir.path(), &mut |_| {}).map_err(|e| e.to_string())?;
        let (_, report) = evaluate_checkpoint(&out.checkpoint, &s.test, 0.5).map_err(|e| e.to_string())?;
        let acc = report.accuracy().unwrap_or(0.0);
        ensure(acc >= MIN_ACCURACY, || format!("test accuracy {acc:.4}"))?;
        let elapsed = start.elapsed();
        ensure(elapsed <= ENCODER_BUDGET, || format!("took {elapsed:.0?}"))?;
        Ok(format!("{}: accuracy {acc:.4}, {elapsed:.0?}", path.display()))
    };
    match run() {
        Ok(d) => Outcome::Pass(d),
        Err(d) => Outcome::Fail(d),
    }
}

fn criterion_8() -> Check {
    let s = toy_split();
    let texts: Vec<String> = s.train.iter().map(|r| r.review_description.to_lowercase()).collect();
    let mut parts = Vec::new();
    for kind in [ModelKind::TinyStub, ModelKind::GemmaFamily] {
        let adapter =
            TokenizerAdapter::build(kind.family(), texts.iter().map(String::as_str), 2000).map_err(|e| e.to_string())?;
        let model = Model::fresh(kind, adapter.vocab().len(), &TrainConfig::for_kind(kind)).map_err(|e| e.to_string())?;
        let ds = encode_corpus(&s.train, &PrepConfig::default(), &adapter, 32, TextSource::Cleaned).map_err(|e| e.to_string())?;
        let batch: Vec<&EncodedExample> = ds.examples().take(8).collect();
        let report = head_gradient_check(&model, &batch, 4, 3).map_err(|e| e.to_string())?;
        ensure(report.parameters > 0, || format!("{kind}: nothing checked"))?;
        ensure(report.max_relative_error < GRAD_TOL, || format!("{kind}: {report:?}"))?;
        parts.push(format!("{kind} {:.2e} over {} params", report.max_relative_error, report.parameters));
    }
    Ok(parts.join(", "))
}

fn criterion_9() -> Check {
    let s = toy_split();
    let texts: Vec<String> = s.train.iter().map(|r| r.review_description.to_lowercase()).collect();
    let adapter =
        TokenizerAdapter::build(ModelFamily::DecoderGemma, texts.iter().map(String::as_str), 2000).map_err(|e| e.to_string())?;
    let mut config = TrainConfig::for_kind(ModelKind::GemmaFamily);
    config.learning_rate = 2e-3;
    config.batch_size = 8;
    config.epochs = 2;
    let mut model = Model::fresh(ModelKind::GemmaFamily, adapter.vocab().len(), &config).map_err(|e| e.to_string())?;
    let ds =
        encode_corpus(&s.train, &PrepConfig::default(), &adapter, SEQ_LEN, TextSource::Cleaned).map_err(|e| e.to_string())?;
    let before = model.frozen_fingerprint().map_err(|e| e.to_string())?;
    let result = fine_tune(&mut model, &ds, &config, &mut |_| {}).map_err(|e| e.to_string())?;
    let after = model.frozen_fingerprint().map_err(|e| e.to_string())?;
    let p = result.parameters;
    ensure(p.trainable > 0 && result.steps > 0, || format!("nothing trained: {p:?}"))?;
    ensure(p.trainable_fraction() < MAX_TRAINABLE_FRACTION, || format!("trainable fraction {:.4}", p.trainable_fraction()))?;
    ensure(before == after, || format!("frozen weights changed: {before} -> {after}"))?;
    Ok(format!(
        "4-bit base, {} of {} parameters trainable ({:.2}%), frozen digest unchanged over {} steps",
        p.trainable,
        p.total(),
        100.0 * p.trainable_fraction(),
        result.steps
    ))
}

// -------------------------------------------------------------- pipeline

fn step(args: &[&str]) -> Result<(), String> {
    let o = elicit(args);
    ensure(code(&o) == 0, || format!("`{}` exited {}: {}", args[0], code(&o), stderr(&o).trim()))
}

fn criterion_10() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let source = keyword_corpus(100, 10);
    let apps = write_fixture(&p("pages"), &source, 20);
    let mut ingest: Vec<String> = ["ingest", "--fixture", s(&p("pages")), "--out", s(&p("raw.jsonl"))].map(String::from).to_vec();
    for a in &apps {
        ingest.extend(["--app".to_string(), a.clone()]);
    }
    step(&ingest.iter().map(String::as_str).collect::<Vec<_>>())?;
    let raw = load_corpus(&p("raw.jsonl"), Format::Jsonl).map_err(|e| e.to_string())?;
    ensure(raw.len() == 100, || format!("ingested {}", raw.len()))?;
    write_keyword_labels(&raw, &p("labels.csv"));
    step(&[
        "label",
        "--in",
        s(&p("raw.jsonl")),
        "--labels",
        s(&p("labels.csv")),
        "--require-all",
        "--out",
        s(&p("labeled.jsonl")),
    ])?;
    step(&["prep", "--in", s(&p("labeled.jsonl")), "--out", s(&p("prepared.jsonl"))])?;
    step(&["split", "--in", s(&p("labeled.jsonl")), "--out", s(dir.path())])?;
    step(&[
        "train",
        "--train",
        s(&p("train.jsonl")),
        "--model",
        "tiny-stub",
        "--lr",
        "2e-3",
        "--batch-size",
        "8",
        "--out",
        s(&p("ckpt")),
    ])?;
    step(&["eval", "--checkpoint", s(&p("ckpt")), "--gold", s(&p("test.jsonl")), "--out", s(&p("eval"))])?;
    step(&["report", "--reports", s(&p("eval/report.json")), "--corpus", s(&p("labeled.jsonl")), "--out", s(&p("report"))])?;
    for chart in ["app_distribution.svg", "label_distribution.svg", "metric_comparison.svg"] {
        let text = std::fs::read_to_string(p("report").join(chart)).map_err(|e| format!("{chart}: {e}"))?;
        ensure(text.trim_start().starts_with("<svg"), || format!("{chart} is not SVG"))?;
    }
    let table = std::fs::read_to_string(p("report/table.txt")).map_err(|e| format!("table.txt: {e}"))?;
    for h in ["Model", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1-Score (%)"] {
        ensure(table.contains(h), || format!("table.txt lacks `{h}`"))?;
    }
    let elapsed = start.elapsed();
    within("pipeline", elapsed, E2E_BUDGET)?;
    Ok(format!("7 subcommands exit 0, 3 charts and the comparison table written in {elapsed:.1?}"))
}

type Runner = Box<dyn FnOnce() -> Outcome>;

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        }
    }
}

fn check(f: fn() -> Check) -> impl FnOnce() -> Outcome {
    move || match f() {
        Ok(d) => Outcome::Pass(d),
        Err(d) => Outcome::Fail(d),
    }
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and ignored
    let criteria: Vec<(&str, Runner)> = vec![
        ("metric oracle equivalence", Box::new(check(criterion_1))),
        ("weighted recall equals accuracy", Box::new(check(criterion_2))),
        ("preprocessing properties", Box::new(check(criterion_3))),
        ("stratified 70/30 split", Box::new(check(criterion_4))),
        ("encoding shape", Box::new(check(criterion_5))),
        ("tiny-stub training smoke", Box::new(check(criterion_6))),
        ("pretrained encoder training smoke", Box::new(criterion_7)),
        ("head gradient check", Box::new(check(criterion_8))),
        ("low-rank adaptation", Box::new(check(criterion_9))),
        ("end-to-end pipeline", Box::new(check(criterion_10))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let (tag, detail) = match guarded(f) {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} [{tag}] {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
