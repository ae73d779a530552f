use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::evaluator::{Backend, DepthRubric, RemoteBackendConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service and batch settings. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub curriculum: PathBuf,
    pub store_root: PathBuf,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub remote: Option<RemoteBackendConfig>,
    /// File holding the system prompt for the remote backend.
    #[serde(default)]
    pub rubric_prompt: Option<PathBuf>,
    #[serde(default)]
    pub rubric: DepthRubric,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_poll")]
    pub poll_interval_secs: u64,
    #[serde(default = "default_workers")]
    pub worker_limit: usize,
    #[serde(default)]
    pub watch_dir: Option<PathBuf>,
}

fn default_backend() -> Backend {
    Backend::Heuristic
}

fn default_port() -> u16 {
    8080
}

fn default_poll() -> u64 {
    5
}

fn default_workers() -> usize {
    4
}

impl PipelineConfig {
    /// Minimal heuristic-backend config, mostly for tests and the CLI.
    pub fn new(curriculum: impl Into<PathBuf>, store_root: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            curriculum: curriculum.into(),
            store_root: store_root.into(),
            backend: Backend::Heuristic,
            remote: None,
            rubric_prompt: None,
            rubric: DepthRubric::default(),
            port: default_port(),
            poll_interval_secs: default_poll(),
            worker_limit: default_workers(),
            watch_dir: None,
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.curriculum);
        resolve(&mut cfg.store_root);
        cfg.rubric_prompt.as_mut().map(resolve);
        cfg.watch_dir.as_mut().map(resolve);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.worker_limit == 0 {
            return Err(ConfigError::Invalid("worker_limit must be positive".into()));
        }
        if self.poll_interval_secs == 0 {
            return Err(ConfigError::Invalid("poll_interval_secs must be positive".into()));
        }
        match (self.backend, &self.remote) {
            (Backend::Remote, None) => Err(ConfigError::Invalid(
                "backend = \"remote\" needs a [remote] table".into(),
            )),
            (Backend::Remote, Some(r)) => r.validate().map_err(|e| ConfigError::Invalid(e.to_string())),
            (Backend::Heuristic, _) => Ok(()),
        }
    }
}
