use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Service settings. Values come from an optional TOML file and are then
/// overridden by `MEASURE_DATA_DIR` and `MEASURE_PORT`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub host: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        if let Some(dir) = get("MEASURE_DATA_DIR") {
            self.data_dir = dir.into();
        }
        if let Some(port) = get("MEASURE_PORT") {
            self.port = port
                .parse()
                .map_err(|_| format!("MEASURE_PORT `{port}` is not a port number"))?;
        }
        Ok(())
    }
}
