//! Service configuration: TOML file with `SPARK_`-prefixed env overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::ProviderConfig;

pub const ENV_STORE_ROOT: &str = "SPARK_STORE_ROOT";
pub const ENV_CONFIG: &str = "SPARK_CONFIG";
pub const ENV_SERVER_PORT: &str = "SPARK_SERVER_PORT";
pub const ENV_SERVER_TRANSPORT: &str = "SPARK_SERVER_TRANSPORT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported config schema version {0} (expected {CONFIG_SCHEMA_VERSION})")]
    Version(u32),
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    #[serde(rename = "version", default = "default_version")]
    pub schema_version: u32,
    pub store: StoreSection,
    pub server: ServerSection,
    pub gateway: GatewaySection,
    pub retrieval: RetrievalSection,
    pub learning: LearningSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreSection {
    pub root: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection { root: PathBuf::from("./spark_store") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Stdio,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSection {
    pub transport: Transport,
    pub port: u16,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection { transport: Transport::Stdio, port: 8747 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    pub generation: ProviderConfig,
    pub embedding: ProviderConfig,
    pub embedding_dim: usize,
    pub max_in_flight: usize,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            generation: ProviderConfig::default(),
            embedding: ProviderConfig::default(),
            embedding_dim: crate::gateway::STUB_EMBEDDING_DIM,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSection {
    pub fusion_k: usize,
    pub channel_k: usize,
    /// Minimum cosine similarity for an insight to enter the evidence.
    pub insight_threshold: f64,
    /// Problems longer than this are truncated for intent analysis but
    /// hashed whole for identity.
    pub max_intent_bytes: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            fusion_k: 10,
            channel_k: 25,
            insight_threshold: 0.35,
            max_intent_bytes: 32 * 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningSection {
    pub cluster_threshold: f64,
    pub supersede_threshold: f64,
    pub min_support: usize,
    pub novelty_floor: f64,
    pub enable_novelty_filter: bool,
    pub enable_supersession: bool,
    /// "manual" or "interval:<seconds>".
    pub schedule: String,
}

impl Default for LearningSection {
    fn default() -> Self {
        LearningSection {
            cluster_threshold: 0.80,
            supersede_threshold: 0.90,
            min_support: 1,
            novelty_floor: 0.2,
            enable_novelty_filter: true,
            enable_supersession: true,
            schedule: "manual".into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), source: e })?;
        let mut config: Config = toml::from_str(&raw)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Version(config.schema_version));
        }
        config.apply_env_overrides()?;
        Ok(config)
    }

    /// Config from `SPARK_CONFIG` if set, else defaults; env overrides
    /// apply either way.
    pub fn from_env() -> Result<Config, ConfigError> {
        match std::env::var_os(ENV_CONFIG) {
            Some(path) => Config::load(Path::new(&path)),
            None => {
                let mut config = Config::default();
                config.schema_version = CONFIG_SCHEMA_VERSION;
                config.apply_env_overrides()?;
                Ok(config)
            }
        }
    }

    fn apply_env_overrides(&mut self) -> Result<(), ConfigError> {
        if let Some(root) = std::env::var_os(ENV_STORE_ROOT) {
            self.store.root = PathBuf::from(root);
        }
        if let Ok(port) = std::env::var(ENV_SERVER_PORT) {
            self.server.port = port.parse().map_err(|_| ConfigError::Invalid {
                key: "server.port",
                message: format!("not a port number: {port}"),
            })?;
        }
        if let Ok(transport) = std::env::var(ENV_SERVER_TRANSPORT) {
            self.server.transport = match transport.as_str() {
                "stdio" => Transport::Stdio,
                "http" => Transport::Http,
                other => {
                    return Err(ConfigError::Invalid {
                        key: "server.transport",
                        message: format!("expected stdio or http, got {other}"),
                    })
                }
            };
        }
        Ok(())
    }
}
