//! Service configuration: TOML file, then `DOCVAULT_*` environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::OrchestrateError;
use crate::obfuscate::Algorithm;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinConfig {
    pub url: String,
    pub token: String,
    #[serde(default = "default_pin_timeout")]
    pub timeout_secs: u64,
}

fn default_pin_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Prefix for share URLs.
    pub base_url: String,
    /// PBKDF2 rounds for obfuscation root keys.
    pub pbkdf2_iterations: u32,
    /// PBKDF2 rounds for user passwords.
    pub password_iterations: u32,
    /// Keystore at-rest passphrase. Prefer the environment.
    pub master_passphrase: Option<String>,
    pub workers: usize,
    pub seal_interval_ms: u64,
    pub batch_cap: usize,
    pub inclusion_timeout_ms: u64,
    pub session_ttl_secs: i64,
    /// Obfuscation layers applied to every zone, by algorithm id.
    pub layers: Vec<u8>,
    pub pin: Option<PinConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("docvault-data"),
            bind: "127.0.0.1:8080".into(),
            base_url: "http://127.0.0.1:8080".into(),
            pbkdf2_iterations: crate::obfuscate::DEFAULT_PBKDF2_ITERATIONS,
            password_iterations: 100_000,
            master_passphrase: None,
            workers: 4,
            seal_interval_ms: crate::anchor::DEFAULT_SEAL_INTERVAL.as_millis() as u64,
            batch_cap: crate::anchor::DEFAULT_BATCH_CAP,
            inclusion_timeout_ms: 10_000,
            session_ttl_secs: 12 * 3600,
            layers: Algorithm::ALL.iter().map(|a| a.id()).collect(),
            pin: None,
        }
    }
}

fn env_parse<T: std::str::FromStr>(key: &str, get: &dyn Fn(&str) -> Option<String>) -> Result<Option<T>, OrchestrateError> {
    match get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| OrchestrateError::Config(format!("{key}={v:?} is not valid"))),
    }
}

impl Config {
    /// Reads `path` (if given) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, OrchestrateError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| OrchestrateError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        base.with_env(&|k| std::env::var(k).ok())
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestrateError> {
        toml::from_str(text).map_err(|e| OrchestrateError::Config(e.to_string()))
    }

    /// Applies overrides from `get`, which maps variable names to values.
    pub fn with_env(mut self, get: &dyn Fn(&str) -> Option<String>) -> Result<Self, OrchestrateError> {
        if let Some(v) = get("DOCVAULT_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("DOCVAULT_BIND") {
            self.bind = v;
        }
        if let Some(port) = env_parse::<u16>("DOCVAULT_PORT", get)? {
            let host = self.bind.rsplit_once(':').map_or(self.bind.as_str(), |(h, _)| h).to_string();
            self.bind = format!("{host}:{port}");
        }
        if let Some(v) = get("DOCVAULT_BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = env_parse("DOCVAULT_PBKDF2_ITERATIONS", get)? {
            self.pbkdf2_iterations = v;
        }
        if let Some(v) = env_parse("DOCVAULT_PASSWORD_ITERATIONS", get)? {
            self.password_iterations = v;
        }
        if let Some(v) = get("DOCVAULT_MASTER_PASSPHRASE") {
            self.master_passphrase = Some(v);
        }
        if let Some(v) = env_parse("DOCVAULT_WORKERS", get)? {
            self.workers = v;
        }
        match (get("DOCVAULT_PIN_URL"), get("DOCVAULT_PIN_TOKEN")) {
            (Some(url), token) => {
                let old = self.pin.take();
                self.pin = Some(PinConfig {
                    url,
                    token: token.or(old.as_ref().map(|p| p.token.clone())).unwrap_or_default(),
                    timeout_secs: old.map_or(default_pin_timeout(), |p| p.timeout_secs),
                });
            }
            (None, Some(token)) => {
                if let Some(p) = self.pin.as_mut() {
                    p.token = token;
                }
            }
            (None, None) => {}
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), OrchestrateError> {
        if self.layers.is_empty() || self.layers.len() > crate::obfuscate::MAX_LAYERS {
            return Err(OrchestrateError::Config("layers must list 1..=8 algorithm ids".into()));
        }
        for id in &self.layers {
            Algorithm::try_from(*id).map_err(|e| OrchestrateError::Config(e.to_string()))?;
        }
        if self.workers == 0 {
            return Err(OrchestrateError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.layers.iter().filter_map(|id| Algorithm::try_from(*id).ok()).collect()
    }

    pub fn seal_interval(&self) -> Duration {
        Duration::from_millis(self.seal_interval_ms.max(1))
    }

    pub fn inclusion_timeout(&self) -> Duration {
        Duration::from_millis(self.inclusion_timeout_ms)
    }

    pub fn cas_dir(&self) -> PathBuf {
        self.data_dir.join("cas")
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.data_dir.join("metadata.db")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.data_dir.join("ledger.bin")
    }

    pub fn keystore_dir(&self) -> PathBuf {
        self.data_dir.join("keystore")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.data_dir.join("logs")
    }

    /// Originals and intermediates awaiting upload.
    pub fn staging_dir(&self) -> PathBuf {
        self.data_dir.join("staging")
    }

    pub fn revocations_path(&self) -> PathBuf {
        self.data_dir.join("revocations.jsonl")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn toml_then_env() {
        let c = Config::from_toml(
            r#"
            data_dir = "/tmp/dv"
            bind = "0.0.0.0:9000"
            pbkdf2_iterations = 10
            [pin]
            url = "http://pin.local"
            token = "file-token"
            "#,
        )
        .unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.pin.as_ref().unwrap().timeout_secs, 30);
        let env: HashMap<&str, &str> = HashMap::from([
            ("DOCVAULT_PORT", "7001"),
            ("DOCVAULT_PIN_TOKEN", "env-token"),
            ("DOCVAULT_PBKDF2_ITERATIONS", "99"),
        ]);
        let c = c.with_env(&|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.bind, "0.0.0.0:7001");
        assert_eq!(c.pbkdf2_iterations, 99);
        assert_eq!(c.pin.unwrap().token, "env-token");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("nonsense = 1").is_err());
        let bad = Config { layers: vec![9], ..Config::default() };
        assert!(bad.validate().is_err());
        assert!(Config::default().with_env(&|k| (k == "DOCVAULT_PORT").then(|| "x".into())).is_err());
    }
}
