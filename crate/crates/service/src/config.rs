use std::path::{Path, PathBuf};

use qs_core::SurveyConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Overrides the built-in storage root when the config names none.
pub const DATA_DIR_ENV: &str = "QS_DATA_DIR";

const DEFAULT_DATA_DIR: &str = "qs-data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Origins allowed to call the API from a browser. Empty disables CORS.
    #[serde(default)]
    pub cors_origins: Vec<String>,
    /// Unsubmitted sessions idle longer than this are reported abandoned.
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    /// Surveys registered at startup unless already present.
    #[serde(default)]
    pub surveys: Vec<SurveyConfig>,
}

fn default_ttl() -> u64 {
    2 * 60 * 60
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: None,
            cors_origins: Vec::new(),
            session_ttl_secs: default_ttl(),
            surveys: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing service config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a TOML config; a relative `data_dir` is taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(dir), Some(base)) = (cfg.data_dir.as_mut(), path.parent()) {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Config value, else `QS_DATA_DIR`, else `./qs-data`.
    pub fn resolve_data_dir(&self) -> PathBuf {
        self.resolve_data_dir_with(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    fn resolve_data_dir_with(&self, env: Option<PathBuf>) -> PathBuf {
        self.data_dir
            .clone()
            .or(env)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }
}
