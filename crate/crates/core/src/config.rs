//! `key = value` configuration file.
//!
//! ```text
//! # comments start with '#'
//! storage.root = ./euleresg-data
//! catalog.path = fixtures/catalog/sasb_fixture.json
//! gateway.backend = http            # or mock
//! gateway.max_in_flight = 8
//! model.chat.base_url = https://api.example.com/v1
//! model.chat.model_name = some-chat-model
//! model.chat.api_key_env = CHAT_API_KEY
//! model.chat.timeout = 60
//! model.chat.max_retries = 2
//! model.embed.* / model.rerank.*    # same keys as model.chat
//! retrieval.keyword_top_k = 20
//! retrieval.semantic_top_k = 20
//! retrieval.rerank_weight = 0.7
//! retrieval.final_top_n = 5
//! analysis.parallelism = 4
//! service.max_concurrent_jobs = 1
//! service.ui_dir = ui/dist          # static dashboard assets served under /ui
//! ```
//!
//! Relative paths resolve against the config file's directory. API keys are
//! never read from this file, only from the environment variables it names.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::gateway::{EndpointKind, HttpGateway, MockGateway, ModelEndpointConfig, ModelGateway};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointSettings {
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            api_key_env: String::new(),
            timeout_secs: 60.0,
            max_retries: 2,
        }
    }
}

impl EndpointSettings {
    fn to_endpoint(&self, kind: EndpointKind) -> ModelEndpointConfig {
        ModelEndpointConfig {
            kind,
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub storage_root: PathBuf,
    pub catalog_path: PathBuf,
    pub backend: Backend,
    pub chat: EndpointSettings,
    pub embed: EndpointSettings,
    pub rerank: EndpointSettings,
    pub max_in_flight: usize,
    pub analysis: AnalysisConfig,
    pub max_concurrent_jobs: usize,
    pub ui_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            storage_root: PathBuf::from("euleresg-data"),
            catalog_path: crate::fixtures_dir().join("catalog").join("sasb_fixture.json"),
            backend: Backend::Mock,
            chat: EndpointSettings::default(),
            embed: EndpointSettings::default(),
            rerank: EndpointSettings::default(),
            max_in_flight: 8,
            analysis: AnalysisConfig::default(),
            max_concurrent_jobs: 1,
            ui_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&raw, base)
    }

    pub fn parse_str(raw: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (i, line) in raw.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim(), base_dir)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one key. Also used for per-request overrides.
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<(), ConfigError> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base_dir.join(p) }
        };
        match key {
            "storage.root" => self.storage_root = path(value),
            "catalog.path" => self.catalog_path = path(value),
            "gateway.backend" => {
                self.backend = match value {
                    "mock" => Backend::Mock,
                    "http" => Backend::Http,
                    other => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            message: format!("expected mock or http, got {other:?}"),
                        })
                    }
                }
            }
            "gateway.max_in_flight" => self.max_in_flight = parse(key, value)?,
            "retrieval.keyword_top_k" => self.analysis.retrieval.keyword_top_k = parse(key, value)?,
            "retrieval.semantic_top_k" => self.analysis.retrieval.semantic_top_k = parse(key, value)?,
            "retrieval.rerank_weight" => self.analysis.retrieval.rerank_weight = parse(key, value)?,
            "retrieval.final_top_n" => self.analysis.retrieval.final_top_n = parse(key, value)?,
            "analysis.parallelism" => self.analysis.parallelism = parse(key, value)?,
            "service.max_concurrent_jobs" => self.max_concurrent_jobs = parse(key, value)?,
            "service.ui_dir" => self.ui_dir = Some(path(value)),
            _ => {
                let Some(rest) = key.strip_prefix("model.") else {
                    return Err(ConfigError::UnknownKey(key.into()));
                };
                let (kind, field) = rest.split_once('.').ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
                let ep = match kind {
                    "chat" => &mut self.chat,
                    "embed" => &mut self.embed,
                    "rerank" => &mut self.rerank,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                };
                match field {
                    "base_url" => ep.base_url = value.trim_end_matches('/').to_string(),
                    "model_name" => ep.model_name = value.to_string(),
                    "api_key_env" => ep.api_key_env = value.to_string(),
                    "timeout" => ep.timeout_secs = parse(key, value)?,
                    "max_retries" => ep.max_retries = parse(key, value)?,
                    "api_key" | "key" | "token" => {
                        return Err(ConfigError::Invalid(format!(
                            "{key}: API keys are read from the environment; set model.{kind}.api_key_env instead"
                        )))
                    }
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.analysis.retrieval.validate().map_err(ConfigError::Invalid)?;
        if self.analysis.parallelism == 0 {
            return Err(ConfigError::Invalid("analysis.parallelism must be at least 1".into()));
        }
        if self.max_concurrent_jobs == 0 {
            return Err(ConfigError::Invalid("service.max_concurrent_jobs must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("gateway.max_in_flight must be at least 1".into()));
        }
        if self.backend == Backend::Http {
            for (kind, ep) in self.endpoints() {
                ep.validate().map_err(|e| ConfigError::Invalid(format!("model.{kind:?}: {e}").to_lowercase()))?;
                if ep.model_name.is_empty() {
                    return Err(ConfigError::Invalid(format!("model.{}.model_name is required", format!("{kind:?}").to_lowercase())));
                }
            }
        }
        Ok(())
    }

    fn endpoints(&self) -> [(EndpointKind, ModelEndpointConfig); 3] {
        [
            (EndpointKind::Chat, self.chat.to_endpoint(EndpointKind::Chat)),
            (EndpointKind::Embed, self.embed.to_endpoint(EndpointKind::Embed)),
            (EndpointKind::Rerank, self.rerank.to_endpoint(EndpointKind::Rerank)),
        ]
    }

    /// The configured gateway, or the mock when `force_mock` is set.
    pub fn build_gateway(&self, force_mock: bool) -> Result<Arc<dyn ModelGateway>, ConfigError> {
        if force_mock || self.backend == Backend::Mock {
            return Ok(Arc::new(MockGateway::new()));
        }
        let [(_, chat), (_, embed), (_, rerank)] = self.endpoints();
        let gw = HttpGateway::new(chat, embed, rerank, self.max_in_flight).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Arc::new(gw))
    }
}
