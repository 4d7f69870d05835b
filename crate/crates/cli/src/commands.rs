use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use elicit_core::corpus::{load_corpus, save_corpus, split, SplitOptions};
use elicit_core::encode::TextSource;
use elicit_core::metrics::{compare, confusion, Averaging, ComparisonRow, EvalReport, MetricSet, ReferenceTable};
use elicit_core::textprep::{preprocess, PrepConfig};
use elicit_core::{Corpus, Format, Label, Prediction};
use elicit_ingest::{
    anonymize, dedupe, fetch_many, Endpoint, FetchSpec, FixtureTransport, HttpTransport, JsonPages, PlayStore, RetryPolicy, Sort,
    Transport, DEFAULT_LOCALE, DEFAULT_PAGE_SIZE, DEFAULT_RATE_LIMIT,
};
use elicit_serve::api::Envelope;
use elicit_serve::{AnnotationStore, ServeConfig};
use elicit_train::{evaluate_checkpoint, train_corpus, Checkpoint, ModelKind, TrainRequest};

use crate::charts;
use crate::cli::*;
use crate::config::{ConfigFile, Resolver, Source};
use crate::error::{require, CliError, Result};
use crate::manifest::RunManifest;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_REVIEWS: usize = 200;

pub struct Ctx {
    pub global: GlobalArgs,
    pub file: ConfigFile,
    pub resolver: Resolver,
    pub manifest: Option<RunManifest>,
}

impl Ctx {
    pub fn new(global: GlobalArgs, subcommand: &str, argv: Vec<String>, resolver: Resolver) -> Result<Ctx> {
        let mut manifest = RunManifest::start(subcommand, argv);
        let file = match &global.config {
            Some(path) => {
                let f = ConfigFile::load(path)?;
                manifest.input("config", path)?;
                f
            }
            None => ConfigFile::default(),
        };
        Ok(Ctx { global, file, resolver, manifest: Some(manifest) })
    }

    fn manifest(&mut self) -> &mut RunManifest {
        self.manifest.as_mut().expect("manifest is written once, at the end")
    }

    fn seed(&mut self) -> Result<u64> {
        let (flag, file) = (self.global.seed, self.file.seed);
        self.resolver.pick("seed", flag, Some("ELICIT_SEED"), file, DEFAULT_SEED)
    }

    fn load(&mut self, role: &str, path: &Path) -> Result<Corpus> {
        require(path, role)?;
        let format = corpus_format(path)?;
        let corpus = load_corpus(path, format)?;
        self.manifest().input(role, path)?;
        Ok(corpus)
    }

    fn save(&mut self, role: &str, corpus: &Corpus, path: &Path) -> Result<()> {
        let format = corpus_format(path)?;
        ensure_parent(path)?;
        save_corpus(corpus, path, format)?;
        self.manifest().output(role, path)
    }

    fn write(&mut self, role: &str, path: &Path, text: &str) -> Result<()> {
        ensure_parent(path)?;
        std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        self.manifest().output(role, path)
    }

    /// Writes the run manifest to `--manifest`, or into `default_dir`.
    pub fn finish(&mut self, default_dir: &Path) -> Result<PathBuf> {
        let mut manifest = self.manifest.take().expect("manifest is written once");
        manifest.config = std::mem::take(&mut self.resolver.settings);
        let path = match &self.global.manifest {
            Some(p) => p.clone(),
            None => default_dir.join(format!("elicit-{}.manifest.json", manifest.subcommand)),
        };
        manifest.write(&path)
    }
}

fn corpus_format(path: &Path) -> Result<Format> {
    Format::from_path(path).ok_or_else(|| CliError::Usage(format!("{}: corpus files must end in .jsonl or .csv", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display()))),
        None => Ok(()),
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into())
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Flag if set, else the file value, else `default`.
fn pick_bool(r: &mut Resolver, key: &str, flag: bool, file: Option<bool>, default: bool) -> bool {
    let (v, src) = match (flag, file) {
        (true, _) => (true, Source::Flag),
        (false, Some(f)) => (f, Source::File),
        _ => (default, Source::Default),
    };
    r.record(key, v, src);
    v
}

pub fn ingest(ctx: &mut Ctx, args: IngestArgs) -> Result<PathBuf> {
    let sec = ctx.file.ingest.clone();
    let apps = if !args.apps.is_empty() {
        ctx.resolver.record("ingest.apps", &args.apps, Source::Flag);
        args.apps.clone()
    } else {
        ctx.resolver.record("ingest.apps", &sec.apps, Source::File);
        sec.apps.clone()
    };
    if apps.is_empty() {
        return Err(CliError::Usage("ingest needs at least one --app (or [ingest] apps in the config)".into()));
    }
    let r = &mut ctx.resolver;
    let max = r.pick("ingest.max_reviews", args.max_reviews, Some("ELICIT_MAX_REVIEWS"), sec.max_reviews, DEFAULT_MAX_REVIEWS)?;
    let locale = r.pick("ingest.locale", args.locale, None, sec.locale, DEFAULT_LOCALE.to_string())?;
    let sort: Sort =
        r.pick("ingest.sort", args.sort, None, sec.sort, "newest".to_string())?.parse().map_err(CliError::validation)?;
    let rate = r.pick("ingest.rate_limit", args.rate_limit, None, sec.rate_limit, DEFAULT_RATE_LIMIT)?;
    let page_size = r.pick("ingest.page_size", args.page_size, None, sec.page_size, DEFAULT_PAGE_SIZE)?;
    let anonymized = pick_bool(r, "ingest.anonymize", args.anonymize, sec.anonymize, false);
    let fixture = r.pick_opt(
        "ingest.fixture",
        args.fixture.map(|p| p.display().to_string()),
        None,
        sec.fixture.map(|p| p.display().to_string()),
    )?;
    let endpoint_url = r.pick_opt("ingest.endpoint", args.endpoint, Some("ELICIT_ENDPOINT"), sec.endpoint)?;

    let mut specs = Vec::with_capacity(apps.len());
    for app in &apps {
        let (id, name) = match app.split_once('=') {
            Some((id, name)) => (id.trim(), Some(name.trim())),
            None => (app.trim(), None),
        };
        let mut spec = FetchSpec::new(id, max)?
            .with_locale(locale.clone())?
            .with_sort(sort)
            .with_rate_limit(rate)?
            .with_page_size(page_size)?;
        if let Some(name) = name {
            spec = spec.with_app_name(name);
        }
        specs.push(spec);
    }

    let (transport, endpoint, provenance): (Box<dyn Transport>, Box<dyn Endpoint>, String) = match (&fixture, &endpoint_url) {
        (Some(dir), _) => {
            let dir = PathBuf::from(dir);
            require(&dir, "fixture directory")?;
            ctx.manifest.as_mut().expect("open").input("fixture", &dir)?;
            (Box::new(FixtureTransport::new(&dir)), Box::new(JsonPages::fixture()), "fixture".into())
        }
        (None, Some(url)) => {
            (Box::new(HttpTransport::new(Duration::from_secs(30))), Box::new(JsonPages::new(url.clone())), url.clone())
        }
        (None, None) => {
            let play = PlayStore::default();
            let url = play.url.clone();
            (Box::new(HttpTransport::new(Duration::from_secs(30))), Box::new(play), url)
        }
    };

    let mut records = Vec::new();
    let mut per_app = BTreeMap::new();
    for outcome in fetch_many(&specs, transport.as_ref(), endpoint.as_ref(), RetryPolicy::default()) {
        let outcome = outcome?;
        log::info!("{}: {} reviews over {} pages", outcome.app_id, outcome.records.len(), outcome.stats.pages);
        per_app.insert(outcome.app_id.clone(), serde_json::json!({"records": outcome.records.len(), "stats": outcome.stats}));
        records.extend(outcome.records);
    }
    let records: Vec<_> = dedupe(records).map(|r| if anonymized { anonymize(r) } else { r }).collect();
    let corpus = Corpus::new(stem(&args.out), format!("ingest:{provenance}"), records)?;
    ctx.save("corpus", &corpus, &args.out)?;
    ctx.manifest().note("apps", &per_app);
    ctx.manifest().note("records", corpus.len());
    println!("wrote {} reviews from {} app(s) to {}", corpus.len(), specs.len(), args.out.display());
    Ok(parent_dir(&args.out))
}

#[derive(serde::Deserialize)]
struct LabelRow {
    record_id: String,
    label: String,
}

fn parse_label_value(raw: &str) -> std::result::Result<Label, String> {
    match raw.trim() {
        "1" => Ok(Label::Useful),
        "0" => Ok(Label::NotUseful),
        other => other.parse(),
    }
}

fn read_labels(path: &Path) -> Result<Vec<(usize, LabelRow)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for (i, row) in reader.deserialize::<LabelRow>().enumerate() {
            match row {
                Ok(r) => rows.push((i + 2, r)),
                Err(e) => bad.push(format!("line {}: {e}", i + 2)),
            }
        }
    } else {
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<LabelRow>(line) {
                Ok(r) => rows.push((i + 1, r)),
                Err(e) => bad.push(format!("line {}: {e}", i + 1)),
            }
        }
    }
    if bad.is_empty() {
        Ok(rows)
    } else {
        Err(CliError::Validation { message: format!("{}: {} unreadable label row(s)", path.display(), bad.len()), details: bad })
    }
}

pub fn label(ctx: &mut Ctx, args: LabelArgs) -> Result<PathBuf> {
    let corpus = ctx.load("corpus", &args.input)?;
    require(&args.labels, "labels file")?;
    let rows = read_labels(&args.labels)?;
    ctx.manifest().input("labels", &args.labels)?;

    let known: HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, r)| (r.record_id.as_str(), i)).collect();
    let mut assigned: HashMap<usize, (usize, Label)> = HashMap::new();
    let mut problems = Vec::new();
    let mut unknown = 0usize;
    for (line, row) in &rows {
        let label = match parse_label_value(&row.label) {
            Ok(l) => l,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let Some(&idx) = known.get(row.record_id.as_str()) else {
            unknown += 1;
            continue;
        };
        if let Some((first, prev)) = assigned.insert(idx, (*line, label)) {
            if prev != label {
                problems.push(format!("line {line}: {} was already labeled {prev} on line {first}", row.record_id));
            }
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Validation { message: format!("{} bad label row(s)", problems.len()), details: problems });
    }
    if unknown > 0 {
        log::warn!("{unknown} label row(s) name records not in {}", args.input.display());
    }
    let labeled = assigned.len();
    let records: Vec<_> = corpus
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| match assigned.get(&i) {
            Some(&(_, l)) => r.clone().with_label(Some(l)),
            None => r.clone(),
        })
        .collect();
    let out = Corpus::new(stem(&args.out), corpus.provenance(), records)?;
    let counts = out.label_counts();
    if args.require_all && counts.labeled() < out.len() {
        let missing: Vec<String> =
            out.iter().filter(|r| r.label().is_none()).map(|r| format!("record {} is unlabeled", r.record_id)).collect();
        return Err(CliError::Validation { message: format!("{} record(s) left unlabeled", missing.len()), details: missing });
    }
    ctx.save("corpus", &out, &args.out)?;
    ctx.manifest().note("labels_applied", labeled);
    ctx.manifest().note("labels_unmatched", unknown);
    ctx.manifest().note("label_counts", &counts);
    println!(
        "labeled {labeled} record(s): {} useful, {} not useful, {} unlabeled -> {}",
        counts.get(Label::Useful),
        counts.get(Label::NotUseful),
        out.len() - counts.labeled(),
        args.out.display()
    );
    Ok(parent_dir(&args.out))
}

fn prep_config(ctx: &mut Ctx) -> PrepConfig {
    match ctx.file.prep.clone() {
        Some(p) => {
            ctx.resolver.record("prep", &p, Source::File);
            p
        }
        None => {
            let p = PrepConfig::default();
            ctx.resolver.record("prep", &p, Source::Default);
            p
        }
    }
}

pub fn prep(ctx: &mut Ctx, args: PrepArgs) -> Result<PathBuf> {
    let mut config = prep_config(ctx);
    if args.keep_stopwords {
        config.remove_stopwords = false;
        ctx.resolver.record("prep.remove_stopwords", false, Source::Flag);
    }
    if args.ascii_only {
        config.ascii_only = true;
        ctx.resolver.record("prep.ascii_only", true, Source::Flag);
    }
    config.validate()?;
    let corpus = ctx.load("corpus", &args.input)?;
    let mut out = String::new();
    let mut empty = 0usize;
    for record in corpus.iter() {
        let prepared = preprocess(record, &config)?;
        empty += usize::from(prepared.empty_after_prep);
        out.push_str(&serde_json::to_string(&prepared).map_err(CliError::internal)?);
        out.push('\n');
    }
    ctx.write("prepared", &args.out, &out)?;
    ctx.manifest().note("prep_config_hash", config.config_hash());
    ctx.manifest().note("records", corpus.len());
    ctx.manifest().note("empty_after_prep", empty);
    println!("prepared {} record(s), {empty} empty after preprocessing -> {}", corpus.len(), args.out.display());
    Ok(parent_dir(&args.out))
}

pub fn split_cmd(ctx: &mut Ctx, args: SplitArgs) -> Result<PathBuf> {
    let seed = ctx.seed()?;
    let sec = ctx.file.split.clone();
    let frac =
        ctx.resolver.pick("split.frac", args.frac, Some("ELICIT_FRAC"), sec.frac, SplitOptions::default().train_fraction)?;
    let stratify = if args.no_stratify {
        ctx.resolver.record("split.stratify", false, Source::Flag);
        false
    } else {
        pick_bool(&mut ctx.resolver, "split.stratify", false, sec.stratify, true)
    };
    let corpus = ctx.load("corpus", &args.input)?;
    let result = split(&corpus, SplitOptions { train_fraction: frac, seed, stratify })?;
    let dir = args.out.clone().unwrap_or_else(|| parent_dir(&args.input));
    let ext = corpus_format(&args.input)?.extension();
    let (train_path, test_path) = (dir.join(format!("train.{ext}")), dir.join(format!("test.{ext}")));
    ctx.save("train", &result.train, &train_path)?;
    ctx.save("test", &result.test, &test_path)?;
    ctx.manifest().note("train_size", result.train.len());
    ctx.manifest().note("test_size", result.test.len());
    ctx.manifest().note("train_label_counts", result.train.label_counts());
    ctx.manifest().note("test_label_counts", result.test.label_counts());
    println!(
        "split {} records -> {} train ({}), {} test ({})",
        corpus.len(),
        result.train.len(),
        train_path.display(),
        result.test.len(),
        test_path.display()
    );
    Ok(dir)
}

pub fn train(ctx: &mut Ctx, args: TrainArgs) -> Result<PathBuf> {
    let seed = ctx.seed()?;
    let sec = ctx.file.train.clone();
    let r = &mut ctx.resolver;
    let kind: ModelKind = r
        .pick("train.model", args.model, Some("ELICIT_MODEL"), sec.model, ModelKind::BertFamily.to_string())?
        .parse()
        .map_err(CliError::validation)?;
    let mut req = TrainRequest::new(kind);
    let c = &mut req.config;
    c.seed = seed;
    c.epochs = r.pick("train.epochs", args.epochs, Some("ELICIT_EPOCHS"), sec.epochs, c.epochs)?;
    c.batch_size = r.pick("train.batch_size", args.batch_size, Some("ELICIT_BATCH_SIZE"), sec.batch_size, c.batch_size)?;
    c.learning_rate = r.pick("train.learning_rate", args.lr, Some("ELICIT_LR"), sec.learning_rate, c.learning_rate)?;
    c.max_len = r.pick("train.max_len", args.max_len, Some("ELICIT_MAX_LEN"), sec.max_len, c.max_len)?;
    c.weight_decay = r.pick("train.weight_decay", None, None, sec.weight_decay, c.weight_decay)?;
    c.warmup_steps = r.pick("train.warmup_steps", None, None, sec.warmup_steps, c.warmup_steps)?;
    c.grad_clip = match r.pick_opt("train.grad_clip", None, None, sec.grad_clip)? {
        Some(clip) => Some(clip),
        None => {
            r.record("train.grad_clip", c.grad_clip, Source::Default);
            c.grad_clip
        }
    };
    c.validation_fraction = r.pick("train.validation_fraction", None, None, sec.validation_fraction, c.validation_fraction)?;
    c.decision_threshold = r.pick("train.threshold", args.threshold, None, sec.threshold, c.decision_threshold)?;
    req.model_name = r.pick("train.model_name", args.model_name, None, sec.model_name, kind.to_string())?;
    req.pretrained = r
        .pick_opt(
            "train.pretrained",
            args.pretrained.map(|p| p.display().to_string()),
            Some("ELICIT_PRETRAINED"),
            sec.pretrained.map(|p| p.display().to_string()),
        )?
        .map(PathBuf::from);
    req.text_source = if args.raw_to_model {
        r.record("train.text_source", TextSource::Raw, Source::Flag);
        TextSource::Raw
    } else {
        let v = match sec.text_source.as_deref() {
            Some(s) => serde_json::from_value(serde_json::Value::String(s.to_string()))
                .map_err(|_| CliError::validation(format!("[train] text_source `{s}` must be cleaned or raw")))?,
            None => TextSource::Cleaned,
        };
        r.record("train.text_source", v, if sec.text_source.is_some() { Source::File } else { Source::Default });
        v
    };
    req.prep_config = prep_config(ctx);
    req.prep_config.validate()?;
    req.config.validate(kind)?;
    if let Some(dir) = &req.pretrained {
        require(dir, "pretrained checkpoint")?;
        ctx.manifest().input("pretrained", dir)?;
    }
    let corpus = ctx.load("train", &args.train)?;
    let test = match &args.test {
        Some(p) => Some(ctx.load("test", p)?),
        None => None,
    };

    eprintln!("training {} ({kind}) on {} records, {} epoch(s)", req.model_name, corpus.len(), req.config.epochs);
    let mut outcome = train_corpus(&corpus, &req, &args.out, &mut |e| {
        let val = e
            .validation
            .as_ref()
            .and_then(|v| v.accuracy())
            .map(|a| format!(", validation accuracy {:.4}", a))
            .unwrap_or_default();
        eprintln!("epoch {}: train loss {:.6}{val}", e.epoch, e.train_loss);
    })?;
    let threshold = req.config.decision_threshold;
    if let Some(test) = &test {
        let (_, report) = evaluate_checkpoint(&outcome.checkpoint, test, threshold)?;
        println!("{}", compare(std::slice::from_ref(&report), report.headline).render_text());
        ctx.manifest().note("test_report", &report);
        outcome.checkpoint.set_metric_snapshot(report)?;
    }
    let res = &outcome.result;
    ctx.manifest().output("checkpoint", &args.out)?;
    ctx.manifest().note("best_epoch", res.best_epoch);
    ctx.manifest().note("per_epoch_loss", res.per_epoch_loss());
    ctx.manifest().note("parameters", res.parameters);
    ctx.manifest().note("steps", res.steps);
    ctx.manifest().note("wall_time_seconds", res.wall_time_seconds);
    println!("checkpoint written to {} (best epoch {})", args.out.display(), res.best_epoch);
    Ok(args.out)
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    let mut preds = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str::<Prediction>(line) {
            Ok(p) => preds.push(p),
            Err(e) => bad.push(format!("line {}: {e}", i + 1)),
        }
    }
    if bad.is_empty() {
        Ok(preds)
    } else {
        Err(CliError::Validation { message: format!("{}: {} unreadable prediction(s)", path.display(), bad.len()), details: bad })
    }
}

pub fn eval(ctx: &mut Ctx, args: EvalArgs) -> Result<PathBuf> {
    let gold = ctx.load("gold", &args.gold)?;
    gold.require_labels()?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let report = if let Some(ckpt_dir) = &args.checkpoint {
        let ckpt = Checkpoint::load(ckpt_dir)?;
        ctx.manifest().input("checkpoint", ckpt_dir)?;
        let default = ckpt.manifest().train_config.decision_threshold;
        let threshold = ctx.resolver.pick("eval.threshold", args.threshold, None, None, default)?;
        let (preds, mut report) = evaluate_checkpoint(&ckpt, &gold, threshold)?;
        if let Some(name) = &args.model_name {
            report.model_name = name.clone();
        }
        let lines: String = preds.iter().map(|p| serde_json::to_string(p).expect("serializable") + "\n").collect();
        ctx.write("predictions", &dir.join("predictions.jsonl"), &lines)?;
        report
    } else {
        let pred_path = args.pred.as_ref().expect("clap requires --checkpoint or --pred");
        require(pred_path, "predictions file")?;
        let preds = read_predictions(pred_path)?;
        ctx.manifest().input("predictions", pred_path)?;
        let m = confusion(&preds, gold.records()).map_err(|e| CliError::validation(e.to_string()))?;
        EvalReport::new(args.model_name.clone().unwrap_or_else(|| stem(pred_path)), m)
    };
    ctx.write("report", &dir.join("report.json"), &pretty(&report))?;
    for mode in Averaging::ALL {
        println!("{}", compare(std::slice::from_ref(&report), mode).render_text());
    }
    let m = report.confusion;
    println!("confusion: tp={} fp={} fn={} tn={} (n={})", m.tp, m.fp, m.fn_, m.tn, report.n);
    ctx.manifest().note("headline", report.headline_metrics());
    Ok(dir)
}

pub fn classify(ctx: &mut Ctx, args: ClassifyArgs) -> Result<PathBuf> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    ctx.manifest().input("checkpoint", &args.checkpoint)?;
    let default = ckpt.manifest().train_config.decision_threshold;
    let threshold = ctx.resolver.pick("classify.threshold", args.threshold, None, None, default)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::validation(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let reader: Box<dyn BufRead> = match args.input.as_ref().filter(|p| p.as_os_str() != "-") {
        Some(p) => {
            require(p, "input file")?;
            ctx.manifest().input("input", p)?;
            Box::new(std::io::BufReader::new(std::fs::File::open(p).map_err(CliError::internal)?))
        }
        None => Box::new(std::io::stdin().lock()),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut n = 0usize;
    for line in reader.lines() {
        let line = line.map_err(CliError::internal)?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = elicit_serve::classify(&ckpt, &line, threshold)?;
        let text = if args.json {
            serde_json::to_string(&Envelope::new(resp)).map_err(CliError::internal)?
        } else {
            format!("{}\t{:.6}", resp.label, resp.score)
        };
        writeln!(out, "{text}").map_err(CliError::internal)?;
        n += 1;
    }
    ctx.manifest().note("classified", n);
    Ok(PathBuf::from("."))
}

/// Published fine-tuning results on a 3,200-review labeled set, as fractions.
pub fn published_reference() -> ReferenceTable {
    let row = |name: &str, a: f64, p: f64, r: f64, f: f64| ComparisonRow {
        model_name: name.to_string(),
        metrics: MetricSet {
            accuracy: Some(a / 100.0),
            precision: Some(p / 100.0),
            recall: Some(r / 100.0),
            f1: Some(f / 100.0),
        },
    };
    ReferenceTable {
        title: "published results, 3,200 labeled reviews (not reproducible here: the dataset is unreleased)".into(),
        rows: vec![
            row("BERT", 92.40, 92.45, 92.39, 92.39),
            row("DISTILBERT", 91.00, 91.25, 91.00, 91.25),
            row("GEMMA", 92.00, 92.00, 93.39, 91.39),
        ],
    }
}

pub fn report(ctx: &mut Ctx, args: ReportArgs) -> Result<PathBuf> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        require(path, "report")?;
        let text = std::fs::read_to_string(path).map_err(CliError::internal)?;
        let r: EvalReport = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: not an evaluation report: {e}", path.display())))?;
        ctx.manifest().input("report", path)?;
        reports.push(r);
    }
    ctx.resolver.record("report.averaging", args.averaging, Source::Flag);
    let mut table = compare(&reports, args.averaging);
    if args.with_reference {
        table = table.with_reference(published_reference());
    }
    let dir = args.out.clone();
    let text = table.render_text();
    ctx.write("table_text", &dir.join("table.txt"), &text)?;
    ctx.write("table_json", &dir.join("table.json"), &pretty(&table))?;
    ctx.write("plot_data", &dir.join("metrics.csv"), &table.plot_csv())?;
    let title = format!("Model comparison ({} averaging)", table.averaging);
    let svg = charts::metric_comparison(&table.plot_series(), &title).map_err(CliError::Internal)?;
    ctx.write("chart", &dir.join("metric_comparison.svg"), &svg)?;
    if let Some(path) = &args.corpus {
        let corpus = ctx.load("corpus", path)?;
        let apps = corpus.app_distribution();
        let counts = corpus.label_counts();
        let svg = charts::app_distribution(&apps).map_err(CliError::Internal)?;
        ctx.write("chart", &dir.join("app_distribution.svg"), &svg)?;
        let svg = charts::label_distribution(&counts).map_err(CliError::Internal)?;
        ctx.write("chart", &dir.join("label_distribution.svg"), &svg)?;
        let stats = serde_json::json!({"records": corpus.len(), "apps": apps, "labels": counts});
        ctx.write("corpus_stats", &dir.join("corpus_stats.json"), &pretty(&stats))?;
    } else {
        log::warn!("no --corpus given; skipping the app and label distribution charts");
    }
    print!("{text}");
    Ok(dir)
}

pub fn serve(ctx: &mut Ctx, args: ServeArgs) -> Result<PathBuf> {
    let mut config = match ctx.file.serve.clone() {
        Some(c) => {
            ctx.resolver.record("serve", &c, Source::File);
            c
        }
        None => {
            let c = ServeConfig::default();
            ctx.resolver.record("serve", &c, Source::Default);
            c
        }
    };
    let applied = {
        let r = &ctx.resolver;
        config.apply_env(|k| r.env(k)).map_err(CliError::validation)?
    };
    for name in applied {
        ctx.resolver.record(&format!("serve.env.{name}"), true, Source::Env);
    }
    if let Some(h) = args.host {
        ctx.resolver.record("serve.host", &h, Source::Flag);
        config.host = h;
    }
    if let Some(p) = args.port {
        ctx.resolver.record("serve.port", p, Source::Flag);
        config.port = p;
    }
    if let Some(s) = args.store {
        ctx.resolver.record("serve.store", &s, Source::Flag);
        config.store = s;
    }
    if let Some(c) = args.checkpoint {
        ctx.resolver.record("serve.checkpoint", &c, Source::Flag);
        config.checkpoint = Some(c);
    }
    config.addr().map_err(CliError::validation)?;
    if let Some(dir) = &config.checkpoint {
        require(dir, "checkpoint")?;
        Checkpoint::load(dir)?;
        ctx.manifest().input("checkpoint", dir)?;
    }
    if let Some(path) = &args.import {
        let corpus = ctx.load("import", path)?;
        let store =
            AnnotationStore::open(&config.store).map_err(|e| CliError::Internal(format!("{}: {e}", config.store.display())))?;
        let stats = store.import(&corpus, "import").map_err(CliError::internal)?;
        ctx.manifest().note("import", format!("{stats:?}"));
    }
    let dir = parent_dir(&config.store);
    ctx.finish(&dir)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::internal)?;
    println!("serving on http://{}:{}", config.host, config.port);
    runtime.block_on(elicit_serve::run(config)).map_err(CliError::Internal)?;
    Ok(dir)
}
