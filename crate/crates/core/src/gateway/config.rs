//! Gateway configuration.
//!
//! Loaded from a TOML file whose keys are the field names of
//! [`GatewayConfig`]; any field can then be overridden by an environment
//! variable named `ALIGNER_GATE_<FIELD>` (upper case). List fields take a
//! comma-separated value.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audit::FsyncPolicy;
use crate::engine::{EngineConfig, FailurePolicy};
use crate::session::DEFAULT_SESSION_HEADER;
use crate::trajectory::react::GRAMMAR_MARKERS;
use crate::trajectory::EscapePolicy;

pub const ENV_PREFIX: &str = "ALIGNER_GATE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment override {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen_address: String,
    pub upstream_base_url: String,
    /// Correction backend: `remote`, `identity` or `rule:<path>`.
    pub backend: String,
    /// Base URL of the aligner model when `backend = "remote"`.
    pub aligner_base_url: Option<String>,
    pub aligner_model: String,
    pub failure_policy: FailurePolicy,
    pub session_header_name: String,
    pub session_ttl_secs: u64,
    pub history_char_budget: usize,
    pub audit_log_path: Option<PathBuf>,
    pub audit_fsync: FsyncPolicy,
    pub react_markers: Vec<String>,
    pub react_min_markers: usize,
    pub backend_deadline_ms: u64,
    pub upstream_deadline_ms: u64,
    pub malformed_retries: u32,
    pub skip_on_unchanged: bool,
    pub escape_tags: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            listen_address: "127.0.0.1:8089".into(),
            upstream_base_url: "http://127.0.0.1:8000".into(),
            backend: "remote".into(),
            aligner_base_url: Some("http://127.0.0.1:8001".into()),
            aligner_model: "thought-aligner".into(),
            failure_policy: engine.failure_policy,
            session_header_name: DEFAULT_SESSION_HEADER.into(),
            session_ttl_secs: crate::session::DEFAULT_TTL.as_secs(),
            history_char_budget: engine.history_char_budget,
            audit_log_path: None,
            audit_fsync: FsyncPolicy::Flush,
            react_markers: GRAMMAR_MARKERS.iter().map(|m| m.to_string()).collect(),
            react_min_markers: 2,
            backend_deadline_ms: engine.backend_deadline.as_millis() as u64,
            upstream_deadline_ms: engine.upstream_deadline.as_millis() as u64,
            malformed_retries: engine.malformed_retries,
            skip_on_unchanged: engine.skip_on_unchanged,
            escape_tags: true,
        }
    }
}

impl GatewayConfig {
    /// Read `path` (if given), apply environment overrides and validate.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn from_toml_with_env(
        text: &str,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text)?;
        let defaults = toml::Table::try_from(GatewayConfig::default())
            .expect("default config serializes");
        for (var, raw) in vars {
            let Some(key) = var.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            let value = env_value(&key, &raw, defaults.get(&key)).map_err(|reason| ConfigError::Env {
                var: var.clone(),
                reason,
            })?;
            table.insert(key, value);
        }
        let config: GatewayConfig = table.try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.listen_address.parse::<SocketAddr>().is_err() {
            return invalid(format!("listen_address {:?} is not host:port", self.listen_address));
        }
        check_url("upstream_base_url", &self.upstream_base_url)?;
        if self.history_char_budget == 0 {
            return invalid("history_char_budget must be > 0".into());
        }
        if self.session_ttl_secs == 0 {
            return invalid("session_ttl_secs must be > 0".into());
        }
        if self.session_header_name.is_empty()
            || axum::http::HeaderName::from_bytes(self.session_header_name.as_bytes()).is_err()
        {
            return invalid(format!("bad session_header_name {:?}", self.session_header_name));
        }
        match self.backend.as_str() {
            "remote" => match &self.aligner_base_url {
                Some(url) => check_url("aligner_base_url", url)?,
                None => return invalid("backend \"remote\" needs aligner_base_url".into()),
            },
            "identity" => {}
            other if other.strip_prefix("rule:").is_some_and(|p| !p.is_empty()) => {}
            other => return invalid(format!("unknown backend {other:?}")),
        }
        if self.react_markers.iter().any(String::is_empty) {
            return invalid("react_markers may not contain empty strings".into());
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            failure_policy: self.failure_policy,
            backend_deadline: Duration::from_millis(self.backend_deadline_ms),
            upstream_deadline: Duration::from_millis(self.upstream_deadline_ms),
            malformed_retries: self.malformed_retries,
            skip_on_unchanged: self.skip_on_unchanged,
            history_char_budget: self.history_char_budget,
            escape: if self.escape_tags {
                EscapePolicy::Escape
            } else {
                EscapePolicy::Reject
            },
        }
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}

fn check_url(field: &str, url: &str) -> Result<(), ConfigError> {
    match reqwest::Url::parse(url) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(()),
        _ => Err(ConfigError::Invalid(format!("{field} {url:?} is not an http(s) URL"))),
    }
}

fn env_value(key: &str, raw: &str, default: Option<&toml::Value>) -> Result<toml::Value, String> {
    use toml::Value;
    Ok(match default {
        Some(Value::Integer(_)) => Value::Integer(raw.trim().parse().map_err(|e| format!("{e}"))?),
        Some(Value::Boolean(_)) => Value::Boolean(raw.trim().parse().map_err(|e| format!("{e}"))?),
        Some(Value::Array(_)) => Value::Array(
            raw.split(',')
                .map(|s| Value::String(s.trim().to_string()))
                .filter(|v| v.as_str() != Some(""))
                .collect(),
        ),
        Some(_) => Value::String(raw.to_string()),
        // Optional fields absent from the defaults are all strings or paths.
        None if key == "audit_log_path" || key == "aligner_base_url" => Value::String(raw.to_string()),
        None => return Err(format!("unknown setting {key:?}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_valid() {
        let c = GatewayConfig::from_toml_with_env("", env(&[])).unwrap();
        assert_eq!(c, GatewayConfig::default());
        assert_eq!(c.session_header_name, "X-Aligner-Session");
        assert_eq!(c.session_ttl(), Duration::from_secs(1800));
        assert_eq!(c.engine_config().backend_deadline, Duration::from_secs(2));
    }

    #[test]
    fn file_then_env() {
        let toml = r#"
            upstream_base_url = "http://llm:9000"
            backend = "identity"
            failure_policy = "fail_closed"
            history_char_budget = 500
        "#;
        let c = GatewayConfig::from_toml_with_env(
            toml,
            env(&[
                ("ALIGNER_GATE_HISTORY_CHAR_BUDGET", "800"),
                ("ALIGNER_GATE_REACT_MARKERS", "Thought:, Action:"),
                ("ALIGNER_GATE_SKIP_ON_UNCHANGED", "false"),
                ("ALIGNER_GATE_AUDIT_LOG_PATH", "/tmp/a.jsonl"),
                ("UNRELATED", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.upstream_base_url, "http://llm:9000");
        assert_eq!(c.failure_policy, FailurePolicy::FailClosed);
        assert_eq!(c.history_char_budget, 800);
        assert_eq!(c.react_markers, vec!["Thought:", "Action:"]);
        assert!(!c.skip_on_unchanged);
        assert_eq!(c.audit_log_path.as_deref(), Some(Path::new("/tmp/a.jsonl")));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |toml: &str| GatewayConfig::from_toml_with_env(toml, env(&[])).is_err();
        assert!(bad("upstream_base_url = \"not a url\""));
        assert!(bad("history_char_budget = 0"));
        assert!(bad("listen_address = \"localhost\""));
        assert!(bad("backend = \"magic\""));
        assert!(bad("no_such_key = 1"));
        assert!(GatewayConfig::from_toml_with_env(
            "",
            env(&[("ALIGNER_GATE_HISTORY_CHAR_BUDGET", "lots")])
        )
        .is_err());
        assert!(GatewayConfig::from_toml_with_env("", env(&[("ALIGNER_GATE_BOGUS", "1")])).is_err());
    }
}
