//! Run manifests embedded in every JSON report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub register_width: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub seed: u64,
    /// Command-specific options.
    #[serde(default)]
    pub options: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub inputs: Vec<String>,
    pub config: RunConfig,
    pub tool_version: String,
    /// SHA-256 of each written file.
    pub outputs: BTreeMap<String, String>,
    /// Headline numbers picked up by `report`.
    #[serde(default)]
    pub results: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[impl AsRef<Path>], config: RunConfig) -> Self {
        Self {
            command: command.to_string(),
            label: None,
            inputs: inputs
                .iter()
                .map(|p| p.as_ref().display().to_string())
                .collect(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    /// Writes `bytes` to `path` and records its digest.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::input(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::input(path, e))?;
        self.outputs
            .insert(path.display().to_string(), digest(bytes));
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: f64) {
        self.results.insert(key.to_string(), value);
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
