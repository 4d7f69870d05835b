use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use elicit_core::metrics::Averaging;

use crate::error::EXIT_CODES_HELP;

/// Mine app-store reviews for requirements: ingest, label, prepare, split,
/// fine-tune, evaluate, report and serve.
#[derive(Debug, Parser)]
#[command(name = "elicit", version, after_help = EXIT_CODES_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML config file with [ingest] [prep] [split] [train] [serve] sections.
    #[arg(long, global = true, value_name = "PATH", env = "ELICIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for splitting, initialization, dropout and shuffling.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Where to write the run manifest (default: next to the outputs).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch reviews into an unlabeled corpus file.
    Ingest(IngestArgs),
    /// Merge a record_id -> label file into a corpus.
    Label(LabelArgs),
    /// Clean and tokenize a corpus into a prepared JSONL artifact.
    Prep(PrepArgs),
    /// Stratified train/test split.
    Split(SplitArgs),
    /// Fine-tune a classifier and write a checkpoint directory.
    Train(TrainArgs),
    /// Score a checkpoint or a predictions file against gold labels.
    Eval(EvalArgs),
    /// Classify text lines from a file or stdin.
    Classify(ClassifyArgs),
    /// Comparison table and charts from evaluation reports.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// App to fetch, as `package.id` or `package.id=Display Name`. Repeatable.
    #[arg(long = "app", value_name = "ID[=NAME]")]
    pub apps: Vec<String>,
    /// Read recorded JSON pages from DIR instead of the network.
    #[arg(long, value_name = "DIR", conflicts_with = "endpoint")]
    pub fixture: Option<PathBuf>,
    /// Base URL of a JSON pages endpoint (default: the store's web endpoint).
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Reviews per app.
    #[arg(long = "max", value_name = "N")]
    pub max_reviews: Option<usize>,
    #[arg(long)]
    pub locale: Option<String>,
    /// newest, rating or relevance.
    #[arg(long)]
    pub sort: Option<String>,
    /// Requests per second, shared by all apps.
    #[arg(long = "rate", value_name = "RPS")]
    pub rate_limit: Option<f64>,
    #[arg(long)]
    pub page_size: Option<usize>,
    /// Replace usernames with stable hashes.
    #[arg(long)]
    pub anonymize: bool,
    /// Corpus file to write (.jsonl or .csv).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// CSV with record_id,label columns, or JSONL with those keys.
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Fail unless every record ends up labeled.
    #[arg(long)]
    pub require_all: bool,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keep stopwords.
    #[arg(long)]
    pub keep_stopwords: bool,
    /// Drop non-ASCII letters as special characters.
    #[arg(long)]
    pub ascii_only: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Training fraction.
    #[arg(long, value_name = "F")]
    pub frac: Option<f64>,
    /// Shuffle without preserving class proportions.
    #[arg(long)]
    pub no_stratify: bool,
    /// Directory for train and test files (default: beside the input).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training corpus.
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    /// Held-out corpus to evaluate after training; its report is stored in the checkpoint.
    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,
    /// bert-family, distilled, gemma-family or tiny-stub.
    #[arg(long)]
    pub model: Option<String>,
    /// Name recorded in the checkpoint and reports.
    #[arg(long)]
    pub model_name: Option<String>,
    /// Published checkpoint directory to start from.
    #[arg(long, value_name = "DIR")]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Feed the raw review text to the tokenizer instead of the cleaned text.
    #[arg(long)]
    pub raw_to_model: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR", required_unless_present = "pred", conflicts_with = "pred")]
    pub checkpoint: Option<PathBuf>,
    /// Predictions JSONL (record_id, predicted_label, score).
    #[arg(long, value_name = "FILE")]
    pub pred: Option<PathBuf>,
    /// Labeled corpus to score against.
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Model name for the report (default: from the checkpoint, or the predictions file stem).
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Directory for report.json and predictions.jsonl (default: current directory).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// One text per line; stdin when absent or `-`.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// One JSON object per line, same fields as the HTTP classify response.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// EvalReport JSON files, one table row each.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    /// Corpus for the app and label distribution charts.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// positive_class, macro or weighted.
    #[arg(long, default_value = "macro")]
    pub averaging: Averaging,
    /// Append the published comparison rows.
    #[arg(long)]
    pub with_reference: bool,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// SQLite annotation store.
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    /// Checkpoint to load at startup.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    /// Corpus to import into the store before serving.
    #[arg(long, value_name = "FILE")]
    pub import: Option<PathBuf>,
}
