//! Service configuration: TOML file, then environment, then CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{GenerationConfig, GenerationError, LiveSettings, RetryPolicy};
use crate::plot::FinetuneFormat;
use crate::screenplay::{LayoutConfig, LayoutError};
use crate::text::{GenreVocabulary, DEFAULT_GENRES};

pub const ENV_LISTEN: &str = "KUROSAWA_LISTEN";
pub const ENV_DATA_DIR: &str = "KUROSAWA_DATA_DIR";
pub const ENV_BACKEND: &str = "KUROSAWA_BACKEND";
pub const ENV_AUTH_TOKEN: &str = "KUROSAWA_AUTH_TOKEN";
pub const ENV_CORS_ORIGINS: &str = "KUROSAWA_CORS_ORIGINS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Directory holding an `index.toml` mock bank; the built-in bank is
    /// used when unset.
    pub mock_bank_dir: Option<PathBuf>,
    pub live: LiveSettings,
    pub retry_attempts: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub context_limit: Option<usize>,
}

impl BackendConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        let mut p = RetryPolicy::default();
        if let Some(n) = self.retry_attempts {
            p.max_attempts = n.max(1);
        }
        if let Some(ms) = self.retry_backoff_ms {
            p.base_backoff = std::time::Duration::from_millis(ms);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen_address: String,
    pub data_dir: PathBuf,
    pub backend: BackendConfig,
    pub generation: GenerationConfig,
    pub layout: LayoutConfig,
    pub format: FinetuneFormat,
    pub genres: Vec<String>,
    /// Shared bearer token required on every request except the health check.
    #[serde(skip_serializing)]
    pub auth_token: Option<String>,
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("kurosawa-data"),
            backend: BackendConfig::default(),
            generation: GenerationConfig::default(),
            layout: LayoutConfig::default(),
            format: FinetuneFormat::default(),
            genres: DEFAULT_GENRES.iter().map(|s| s.to_string()).collect(),
            auth_token: None,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("bad config {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("{name} has unknown value `{value}`")]
    BadEnv { name: &'static str, value: String },
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("the live backend needs an endpoint URL (set {})", crate::generation::live_env::URL)]
    MissingBackendUrl,
    #[error("genre vocabulary is empty")]
    EmptyVocabulary,
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads `path` when given (defaults otherwise) and applies the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    /// Overrides fields from variables returned by `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var(ENV_LISTEN) {
            self.listen_address = v;
        }
        if let Some(v) = var(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var(ENV_BACKEND) {
            self.backend.kind = match v.trim().to_ascii_lowercase().as_str() {
                "mock" => BackendKind::Mock,
                "live" => BackendKind::Live,
                _ => {
                    return Err(ConfigError::BadEnv {
                        name: ENV_BACKEND,
                        value: v,
                    })
                }
            };
        }
        if let Some(v) = var(ENV_AUTH_TOKEN) {
            self.auth_token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = var(ENV_CORS_ORIGINS) {
            self.cors_origins = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        let live = &mut self.backend.live;
        use crate::generation::live_env;
        if let Some(v) = var(live_env::URL) {
            live.url = v;
        }
        if let Some(v) = var(live_env::TOKEN) {
            live.token = Some(v);
        }
        if let Some(v) = var(live_env::MODEL) {
            live.model_ref = v.clone();
            if self.generation.model_ref.is_empty() {
                self.generation.model_ref = v;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generation.validate()?;
        self.layout.validate()?;
        if self.backend.kind == BackendKind::Live && self.backend.live.url.trim().is_empty() {
            return Err(ConfigError::MissingBackendUrl);
        }
        if self.genres.is_empty() {
            return Err(ConfigError::EmptyVocabulary);
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> GenreVocabulary {
        GenreVocabulary::new(&self.genres)
    }
}
