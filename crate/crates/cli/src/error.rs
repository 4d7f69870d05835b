use std::fmt;
use std::path::{Path, PathBuf};

use elicit_core::CorpusError;
use elicit_ingest::IngestError;
use elicit_train::TrainError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_MISSING_ARTIFACT: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_UPSTREAM: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0   success
  1   internal error
  2   a required input artifact is missing (the expected path is printed)
  3   validation failure (bad records, labels, configuration values or metadata)
  4   the review source failed (transport error after retries, unparseable page)
  64  command-line usage error";

/// Record-level problems printed before the rest are summarized.
const MAX_DETAILS: usize = 25;

#[derive(Debug)]
pub enum CliError {
    MissingArtifact { what: String, path: PathBuf },
    Validation { message: String, details: Vec<String> },
    Upstream(String),
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation { message: message.into(), details: Vec::new() }
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingArtifact { .. } => EXIT_MISSING_ARTIFACT,
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Upstream(_) => EXIT_UPSTREAM,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissingArtifact { what, path } => write!(f, "missing {what}: expected {}", path.display()),
            CliError::Validation { message, details } => {
                write!(f, "validation failed: {message}")?;
                for d in details.iter().take(MAX_DETAILS) {
                    write!(f, "\n  {d}")?;
                }
                if details.len() > MAX_DETAILS {
                    write!(f, "\n  ... and {} more", details.len() - MAX_DETAILS)?;
                }
                Ok(())
            }
            CliError::Upstream(m) => write!(f, "review source failed: {m}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Fails with exit code 2 unless `path` exists.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact { what: what.to_string(), path: path.to_path_buf() })
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { ref source, ref path } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingArtifact { what: "file".into(), path: PathBuf::from(path) }
            }
            CorpusError::Io { .. } => CliError::Internal(e.to_string()),
            CorpusError::Validation(issues) => CliError::Validation {
                message: format!("{} invalid record(s)", issues.len()),
                details: issues.iter().map(ToString::to_string).collect(),
            },
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::CheckpointNotFound(path) => CliError::MissingArtifact { what: "checkpoint".into(), path },
            TrainError::Corpus(c) => c.into(),
            TrainError::Tensor(_) => CliError::Internal(e.to_string()),
            TrainError::Io { ref source, ref path } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingArtifact { what: "file".into(), path: path.clone() }
            }
            TrainError::Io { .. } => CliError::Internal(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidSpec(m) => CliError::validation(m),
            IngestError::Fixture { path, .. } => CliError::MissingArtifact { what: "fixture".into(), path },
            other => CliError::Upstream(other.to_string()),
        }
    }
}

impl From<elicit_core::textprep::PrepError> for CliError {
    fn from(e: elicit_core::textprep::PrepError) -> Self {
        CliError::validation(e.to_string())
    }
}
