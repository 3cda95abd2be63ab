//! Run manifests: what a command read, what it wrote, and the seeds and
//! hashes needed to reproduce it. Deliberately free of timestamps so that
//! re-running a command reproduces the manifest byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub settings: BTreeMap<String, String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Checkpoint file name to content id (hex), for checkpoint-producing
    /// or checkpoint-consuming commands.
    pub checkpoints: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn record(path: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileRecord { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path: None,
            seeds: BTreeMap::new(),
            settings: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoints: BTreeMap::new(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.insert(key.into(), value.to_string());
        self
    }

    pub fn seed(&mut self, key: &str, value: u64) -> &mut Self {
        self.seeds.insert(key.into(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(record(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        self.outputs.push(record(path)?);
        Ok(self)
    }

    /// Writes `<output>.manifest.json` (or `manifest.json` inside a
    /// directory output).
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = if output.is_dir() {
            output.join("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        };
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
