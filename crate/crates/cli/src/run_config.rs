use std::path::{Path, PathBuf};

use dsanet_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Resolved parameters of one invocation, written next to its outputs.
/// Passing the file back with `--config` repeats the run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub f64: Option<bool>,
    /// Command-specific settings.
    #[serde(default)]
    pub settings: serde_json::Value,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Settings from the file, or defaults when it holds none for `command`.
    pub fn settings<T: DeserializeOwned + Default>(&self, command: &str) -> Result<T> {
        if self.settings.is_null() {
            return Ok(T::default());
        }
        if !self.command.is_empty() && self.command != command {
            return Err(Error::Config(format!("config was written by {:?}, not {command:?}", self.command)));
        }
        serde_json::from_value(self.settings.clone()).map_err(|e| Error::Config(format!("settings: {e}")))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RUN_CONFIG_FILE), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("configuration serializes");
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })
}
