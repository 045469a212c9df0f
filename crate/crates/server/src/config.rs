//! Instance configuration: a TOML file with `ETB_`-prefixed environment
//! overrides.

use std::fs::{self, File};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use etb_core::access::HashingParams;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Node,
    Central,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node" => Ok(Mode::Node),
            "central" => Ok(Mode::Central),
            other => Err(format!("unknown mode {other:?} (expected node or central)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    #[serde(default = "default_listen")]
    pub listen_address: SocketAddr,
    pub data_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central_token: Option<String>,
    #[serde(default = "default_interval")]
    pub sync_interval_seconds: u64,
    #[serde(default = "default_ttl")]
    pub session_ttl_hours: u32,
    /// Guards node registration on a central instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin_token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hashing: Option<HashingParams>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_interval() -> u64 {
    60
}

fn default_ttl() -> u32 {
    12
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn new(mode: Mode, data_dir: impl Into<PathBuf>) -> Self {
        Config {
            mode,
            listen_address: default_listen(),
            data_dir: data_dir.into(),
            node_id: None,
            central_endpoint: None,
            central_token: None,
            sync_interval_seconds: default_interval(),
            session_ttl_hours: default_ttl(),
            admin_token: None,
            hashing: None,
        }
    }

    /// Reads a config file, applies environment overrides and validates.
    /// A relative `data_dir` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut config = Config::parse(&text, std::env::vars())?;
        if config.data_dir.is_relative() {
            let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            config.data_dir = base.join(&config.data_dir);
        }
        Ok(config)
    }

    /// Parses TOML text, then applies `ETB_*` overrides from `env`.
    pub fn parse(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        for (key, value) in env {
            let Some(field) = key.strip_prefix("ETB_") else { continue };
            let field = field.to_ascii_lowercase();
            let value = match field.as_str() {
                "sync_interval_seconds" | "session_ttl_hours" => value
                    .parse::<i64>()
                    .map(toml::Value::Integer)
                    .map_err(|_| ConfigError::Invalid(format!("{key} must be an integer")))?,
                "mode" | "listen_address" | "data_dir" | "node_id" | "central_endpoint" | "central_token"
                | "admin_token" => toml::Value::String(value),
                _ => continue,
            };
            table.insert(field, value);
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sync_interval_seconds == 0 {
            return Err(ConfigError::Invalid("sync_interval_seconds must be at least 1".into()));
        }
        if self.session_ttl_hours == 0 {
            return Err(ConfigError::Invalid("session_ttl_hours must be at least 1".into()));
        }
        if self.mode == Mode::Node {
            if self.node_id.is_none_or(|id| id.is_nil()) {
                return Err(ConfigError::Invalid("node mode requires node_id".into()));
            }
            if self.central_endpoint.is_some() != self.central_token.is_some() {
                return Err(ConfigError::Invalid("central_endpoint and central_token go together".into()));
            }
            if let Some(endpoint) = &self.central_endpoint {
                let url = reqwest::Url::parse(endpoint)
                    .map_err(|e| ConfigError::Invalid(format!("central_endpoint: {e}")))?;
                if !matches!(url.scheme(), "http" | "https") {
                    return Err(ConfigError::Invalid("central_endpoint must be http or https".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether this node pushes to a central.
    pub fn sync_enabled(&self) -> bool {
        self.mode == Mode::Node && self.central_endpoint.is_some()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn log_path(&self) -> PathBuf {
        self.data_dir.join("etb.log")
    }
}

/// Exclusive hold on a data directory, released on drop. Keeps `serve` and
/// offline CLI commands from writing the same files at once.
#[derive(Debug)]
pub struct DataDirLock {
    _file: File,
}

impl DataDirLock {
    pub fn acquire(data_dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(data_dir).map_err(|e| format!("cannot create {}: {e}", data_dir.display()))?;
        let path = data_dir.join("etb.lock");
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| format!("cannot open {}: {e}", path.display()))?;
        file.try_lock()
            .map_err(|_| format!("{} is in use by another etb process", data_dir.display()))?;
        Ok(DataDirLock { _file: file })
    }
}
