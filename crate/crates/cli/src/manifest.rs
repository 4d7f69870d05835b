//! One JSON manifest per run: what was asked, how each setting was
//! resolved, and the hashes of everything read and written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use elicit_core::hashing::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::Setting;
use crate::error::{CliError, Result};

pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
    /// `sha256:` of the file, or of the sorted per-file hashes for a directory.
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub toolkit_version: String,
    pub argv: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub config: BTreeMap<String, Setting>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, serde_json::Value>,
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(subcommand: &str, argv: Vec<String>) -> Self {
        let now = stamp(Utc::now());
        RunManifest {
            schema_version: RUN_MANIFEST_SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            argv,
            started_at: now.clone(),
            finished_at: now,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let a = hash_artifact(role, path)?;
        self.inputs.push(a);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        let a = hash_artifact(role, path)?;
        self.outputs.push(a);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or_default());
    }

    pub fn write(mut self, path: &Path) -> Result<PathBuf> {
        self.finished_at = stamp(Utc::now());
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(CliError::internal)?;
        }
        let mut text = serde_json::to_string_pretty(&self).map_err(CliError::internal)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        Ok(path.to_path_buf())
    }
}

pub fn hash_artifact(role: &str, path: &Path) -> Result<Artifact> {
    let (sha256, bytes) = if path.is_dir() {
        let mut entries: Vec<(String, String, u64)> = Vec::new();
        walk(path, path, &mut entries)?;
        entries.sort();
        let listing: String = entries.iter().map(|(p, h, _)| format!("{h}  {p}\n")).collect();
        (sha256_hex(listing), entries.iter().map(|e| e.2).sum())
    } else {
        let data = std::fs::read(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        (sha256_hex(&data), data.len() as u64)
    };
    Ok(Artifact { role: role.to_string(), path: path.to_path_buf(), sha256: format!("sha256:{sha256}"), bytes })
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, String, u64)>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(CliError::internal)? {
        let path = entry.map_err(CliError::internal)?.path();
        if is_manifest(&path) {
            continue;
        }
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            let data = std::fs::read(&path).map_err(CliError::internal)?;
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            out.push((rel, sha256_hex(&data), data.len() as u64));
        }
    }
    Ok(())
}

/// Run manifests never count as part of the artifacts they describe.
fn is_manifest(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("elicit-") && n.ends_with(".manifest.json"))
}
