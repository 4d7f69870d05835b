//! Layered settings: command-line flags over `ELICIT_*` environment
//! variables over the TOML config file over built-in defaults. Every value
//! that is resolved is recorded with where it came from.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use elicit_core::textprep::PrepConfig;
use elicit_serve::ServeConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{require, CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// `package.id` or `package.id=Display Name`.
    pub apps: Vec<String>,
    pub max_reviews: Option<usize>,
    pub locale: Option<String>,
    pub sort: Option<String>,
    pub rate_limit: Option<f64>,
    pub page_size: Option<usize>,
    pub anonymize: Option<bool>,
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub frac: Option<f64>,
    pub stratify: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: Option<String>,
    pub model_name: Option<String>,
    pub pretrained: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_len: Option<usize>,
    pub weight_decay: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub grad_clip: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub text_source: Option<String>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: Option<u32>,
    pub seed: Option<u64>,
    pub ingest: IngestSection,
    pub prep: Option<PrepConfig>,
    pub split: SplitSection,
    pub train: TrainSection,
    pub serve: Option<ServeConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        require(path, "config file")?;
        let text = std::fs::read_to_string(path).map_err(CliError::internal)?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::validation(format!("config {}: {}", path.display(), e.message())))?;
        match file.schema_version {
            Some(v) if v != CONFIG_SCHEMA_VERSION => Err(CliError::validation(format!(
                "config {} has schema_version {v}; this build reads {CONFIG_SCHEMA_VERSION}",
                path.display()
            ))),
            _ => Ok(file),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Flag,
    Env,
    File,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub value: Value,
    pub source: Source,
}

type EnvLookup = Box<dyn Fn(&str) -> Option<String>>;

pub struct Resolver {
    env: EnvLookup,
    pub settings: BTreeMap<String, Setting>,
}

impl Resolver {
    pub fn from_process_env() -> Self {
        Resolver::with_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    pub fn with_env(env: impl Fn(&str) -> Option<String> + 'static) -> Self {
        Resolver { env: Box::new(env), settings: BTreeMap::new() }
    }

    pub fn env(&self, key: &str) -> Option<String> {
        (self.env)(key)
    }

    pub fn record(&mut self, key: &str, value: impl Serialize, source: Source) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.settings.insert(key.to_string(), Setting { value, source });
    }

    /// First of flag, environment variable, file value and default.
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, env: Option<&str>, file: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let (value, source) = if let Some(v) = flag {
            (v, Source::Flag)
        } else if let Some(raw) = env.and_then(|e| self.env(e)) {
            let name = env.expect("checked");
            let v = raw.trim().parse::<T>().map_err(|e| CliError::validation(format!("{name}={raw}: {e}")))?;
            (v, Source::Env)
        } else if let Some(v) = file {
            (v, Source::File)
        } else {
            (default, Source::Default)
        };
        self.record(key, &value, source);
        Ok(value)
    }

    /// Like [`Resolver::pick`] for values without a default. Unset values
    /// are not recorded.
    pub fn pick_opt<T>(&mut self, key: &str, flag: Option<T>, env: Option<&str>, file: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let found = if let Some(v) = flag {
            Some((v, Source::Flag))
        } else if let Some(raw) = env.and_then(|e| self.env(e)) {
            let name = env.expect("checked");
            let v = raw.trim().parse::<T>().map_err(|e| CliError::validation(format!("{name}={raw}: {e}")))?;
            Some((v, Source::Env))
        } else {
            file.map(|v| (v, Source::File))
        };
        Ok(found.map(|(v, source)| {
            self.record(key, &v, source);
            v
        }))
    }
}
