//! Service configuration. Precedence: command-line flags, then
//! environment variables, then the config file, then defaults.

use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const ENV_DATA_DIR: &str = "FLOWSCRIBE_DATA_DIR";
pub const ENV_LUT: &str = "FLOWSCRIBE_LUT";
pub const ENV_PORT: &str = "FLOWSCRIBE_PORT";
pub const ENV_LLM_ENDPOINT: &str = "FLOWSCRIBE_LLM_ENDPOINT";
pub const ENV_LLM_API_KEY: &str = "FLOWSCRIBE_LLM_API_KEY";
pub const ENV_LLM_MODEL: &str = "FLOWSCRIBE_LLM_MODEL";

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "flowscribe-data";

/// Layer of optional settings. The config file, the environment and the
/// command line each produce one.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub data_dir: Option<PathBuf>,
    pub lut_path: Option<PathBuf>,
    pub port: Option<u16>,
    pub llm_endpoint: Option<String>,
    pub llm_api_key: Option<String>,
    pub llm_model: Option<String>,
    pub llm_timeout_secs: Option<u64>,
}

impl Layer {
    /// `self` wins wherever it is set.
    pub fn over(self, lower: Layer) -> Layer {
        Layer {
            data_dir: self.data_dir.or(lower.data_dir),
            lut_path: self.lut_path.or(lower.lut_path),
            port: self.port.or(lower.port),
            llm_endpoint: self.llm_endpoint.or(lower.llm_endpoint),
            llm_api_key: self.llm_api_key.or(lower.llm_api_key),
            llm_model: self.llm_model.or(lower.llm_model),
            llm_timeout_secs: self.llm_timeout_secs.or(lower.llm_timeout_secs),
        }
    }

    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<Layer, ConfigError> {
        let port = match get(ENV_PORT) {
            Some(p) => Some(p.trim().parse().map_err(|_| ConfigError::Env(ENV_PORT, p))?),
            None => None,
        };
        Ok(Layer {
            data_dir: get(ENV_DATA_DIR).map(PathBuf::from),
            lut_path: get(ENV_LUT).map(PathBuf::from),
            port,
            llm_endpoint: get(ENV_LLM_ENDPOINT),
            llm_api_key: get(ENV_LLM_API_KEY),
            llm_model: get(ENV_LLM_MODEL),
            llm_timeout_secs: None,
        })
    }

    pub fn from_file(path: &Path) -> Result<Layer, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))?;
        toml::from_str(&text).map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    /// `None` or `"mock"` selects the offline keyword client.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub data_dir: PathBuf,
    pub lut_path: Option<PathBuf>,
    pub port: u16,
    pub llm: LlmSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}: invalid value {1:?}")]
    Env(&'static str, String),
    #[error("config file {path}: {msg}", path = .0.display(), msg = .1)]
    Read(PathBuf, String),
}

impl Config {
    /// Resolve flags over environment over file over defaults.
    pub fn resolve(cli: Layer, env: Layer, file: Option<&Path>) -> Result<Config, ConfigError> {
        let file = match file {
            Some(p) => Layer::from_file(p)?,
            None => Layer::default(),
        };
        let l = cli.over(env).over(file);
        Ok(Config {
            data_dir: l.data_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            lut_path: l.lut_path,
            port: l.port.unwrap_or(DEFAULT_PORT),
            llm: LlmSettings {
                endpoint: l.llm_endpoint,
                api_key: l.llm_api_key,
                model: l.llm_model.unwrap_or_else(|| "mock-keyword/1".into()),
                timeout_secs: l.llm_timeout_secs.unwrap_or(60),
            },
        })
    }

    pub fn catalogue_path(&self) -> PathBuf {
        self.data_dir.join("catalogue.jsonl")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.data_dir.join("runs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("flowscribe.toml");
        std::fs::write(
            &file,
            "data_dir = \"/from/file\"\nport = 1111\nllm_model = \"file-model\"\nlut_path = \"/file.flut\"\n",
        )
        .unwrap();
        let env: HashMap<&str, &str> = [(ENV_PORT, "2222"), (ENV_LLM_MODEL, "env-model")].into();
        let env = Layer::from_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        let cli = Layer {
            port: Some(3333),
            ..Layer::default()
        };
        let c = Config::resolve(cli, env, Some(&file)).unwrap();
        assert_eq!(c.port, 3333);
        assert_eq!(c.llm.model, "env-model");
        assert_eq!(c.data_dir, PathBuf::from("/from/file"));
        assert_eq!(c.lut_path, Some(PathBuf::from("/file.flut")));
        assert_eq!(c.llm.endpoint, None);
    }

    #[test]
    fn defaults_and_errors() {
        let c = Config::resolve(Layer::default(), Layer::default(), None).unwrap();
        assert_eq!(c.port, DEFAULT_PORT);
        assert_eq!(c.catalogue_path(), PathBuf::from(DEFAULT_DATA_DIR).join("catalogue.jsonl"));
        assert!(Layer::from_env(|k| (k == ENV_PORT).then(|| "eighty".to_string())).is_err());
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "prot = 1\n").unwrap();
        assert!(Config::resolve(Layer::default(), Layer::default(), Some(&bad)).is_err());
    }
}
