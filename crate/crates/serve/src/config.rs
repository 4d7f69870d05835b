use std::net::SocketAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::store::QueuePolicy;

pub const ENV_PORT: &str = "ELICIT_PORT";
pub const ENV_STORE: &str = "ELICIT_STORE";
pub const ENV_CHECKPOINT: &str = "ELICIT_CHECKPOINT";

/// The `[serve]` section of the shared config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub store: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Where POST /train writes new checkpoints.
    pub checkpoints_dir: PathBuf,
    pub threshold: f64,
    pub queue_policy: QueuePolicy,
    pub default_limit: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            store: PathBuf::from("elicit-store.sqlite"),
            checkpoint: None,
            checkpoints_dir: PathBuf::from("checkpoints"),
            threshold: elicit_core::prediction::DEFAULT_THRESHOLD,
            queue_policy: QueuePolicy::Uncertainty,
            default_limit: 20,
        }
    }
}

impl ServeConfig {
    /// Applies `ELICIT_PORT`, `ELICIT_STORE` and `ELICIT_CHECKPOINT` from `get`,
    /// returning the names that were applied.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<Vec<&'static str>, String> {
        let mut applied = Vec::new();
        if let Some(p) = get(ENV_PORT) {
            self.port = p.trim().parse().map_err(|_| format!("{ENV_PORT}={p} is not a port number"))?;
            applied.push(ENV_PORT);
        }
        if let Some(s) = get(ENV_STORE) {
            self.store = PathBuf::from(s);
            applied.push(ENV_STORE);
        }
        if let Some(c) = get(ENV_CHECKPOINT) {
            self.checkpoint = (!c.is_empty()).then(|| PathBuf::from(c));
            applied.push(ENV_CHECKPOINT);
        }
        Ok(applied)
    }

    pub fn addr(&self) -> Result<SocketAddr, String> {
        format!("{}:{}", self.host, self.port).parse().map_err(|e| format!("bad listen address {}:{}: {e}", self.host, self.port))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let mut c = ServeConfig::default();
        let env = |k: &str| match k {
            ENV_PORT => Some("9000".to_string()),
            ENV_CHECKPOINT => Some("/tmp/ck".to_string()),
            _ => None,
        };
        assert_eq!(c.apply_env(env).unwrap(), [ENV_PORT, ENV_CHECKPOINT]);
        assert_eq!(c.port, 9000);
        assert_eq!(c.checkpoint, Some(PathBuf::from("/tmp/ck")));
        assert!(c.apply_env(|_| Some("x".into())).is_err());
    }
}
