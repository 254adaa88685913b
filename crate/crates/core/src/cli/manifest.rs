use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Version string in `git describe` style.
pub const VERSION: &str = match option_env!("TSGAN_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

/// Record of one command run, written next to its artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: u64,
    pub finished_at: u64,
    pub status: String,
    pub inputs: Vec<PathBuf>,
    /// Artifact file names relative to the manifest.
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(RunManifest {
            command: command.into(),
            version: VERSION.into(),
            config_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            seed,
            started_at: unix_now(),
            finished_at: 0,
            status: "running".into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
        })
    }

    pub fn write(&mut self, dir: &Path, status: &str) -> Result<PathBuf> {
        self.finished_at = unix_now();
        self.status = status.into();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
