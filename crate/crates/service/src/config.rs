use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use dash_core::canonical;
use dash_core::ledger::ChainConfig;
use dash_core::recordstore::BackendKind;
use serde::{Deserialize, Serialize};

/// Overrides `listen`'s port.
pub const ENV_PORT: &str = "DASH_PORT";
/// Overrides `dataDir`.
pub const ENV_DATA_DIR: &str = "DASH_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Root of all persistent state. Absent means everything is in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// `file` needs `dataDir`; records then live under `<dataDir>/records`.
    pub record_backend: BackendKind,
    pub chain: ChainConfig,
    /// Gas limit attached to every workflow transaction.
    pub gas_limit: u64,
    /// Bearer key of the admin identity; other keys are derived from it.
    pub admin_key: String,
    pub admin_label: String,
    /// Pins the clock, for reproducible scenario runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_clock: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            record_backend: BackendKind::Memory,
            chain: ChainConfig::default(),
            gas_limit: 5_000_000,
            admin_key: "dash-admin".into(),
            admin_label: "admin".into(),
            fixed_clock: None,
        }
    }
}

impl ServiceConfig {
    /// Reads a config file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut config = Self::from_json(&bytes)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Canonical JSON, the form `init` writes.
    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("config holds only canonical-encodable values")
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(port) = var(ENV_PORT) {
            let port = port.parse().map_err(|_| ConfigError::Invalid(format!("{ENV_PORT}={port:?} is not a port")))?;
            self.listen.set_port(port);
        }
        if let Some(dir) = var(ENV_DATA_DIR) {
            self.data_dir = Some(dir.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.record_backend == BackendKind::File && self.data_dir.is_none() {
            return Err(ConfigError::Invalid("recordBackend \"file\" needs dataDir".into()));
        }
        if self.admin_key.is_empty() || self.admin_label.is_empty() {
            return Err(ConfigError::Invalid("adminKey and adminLabel must be non-empty".into()));
        }
        Ok(())
    }

    pub fn chain_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("chain"))
    }

    pub fn pubsub_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("pubsub"))
    }

    pub fn records_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("records"))
    }

    pub fn identities_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("identities.jsonl"))
    }

    pub fn audit_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("audit.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_round_trips() {
        let c = ServiceConfig { data_dir: Some("/var/dash".into()), fixed_clock: Some(5), ..ServiceConfig::default() };
        let bytes = c.to_canonical();
        assert_eq!(ServiceConfig::from_json(&bytes).unwrap(), c);
        assert!(canonical::parse_strict(&bytes).is_ok());
    }

    #[test]
    fn env_overrides_port_and_data_dir() {
        let mut c = ServiceConfig::default();
        c.apply_env(|k| match k {
            ENV_PORT => Some("9999".into()),
            ENV_DATA_DIR => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.listen.port(), 9999);
        assert_eq!(c.data_dir.as_deref(), Some(Path::new("/tmp/x")));
        assert!(c.apply_env(|_| Some("not-a-port".into())).is_err());
    }

    #[test]
    fn file_backend_needs_data_dir() {
        let c = ServiceConfig { record_backend: BackendKind::File, ..ServiceConfig::default() };
        assert!(c.validate().is_err());
    }
}
