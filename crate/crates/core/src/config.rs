//! Run configuration: model layout plus training schedule in one TOML file,
//! with named built-in profiles and `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::architecture::{ModelConfig, Variant};
use crate::codec::TrainSchedule;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
}

impl RunConfig {
    pub const PROFILES: [&'static str; 2] = ["desk", "paper"];

    /// `desk` (16^3 synthetic blocks, one core) or `paper` (64^3 blocks).
    pub fn profile(name: &str, variant: Variant) -> Result<Self> {
        match name {
            "desk" => Ok(RunConfig { model: ModelConfig::desk(variant), schedule: TrainSchedule::desk() }),
            "paper" => Ok(RunConfig { model: ModelConfig::paper(variant), schedule: TrainSchedule::paper() }),
            _ => Err(Error::Config(format!("unknown profile '{name}' (expected desk or paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// (`3`, `1e-4`, `[8, 16, 32]`, `true`) and fall back to a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Value = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut node = &mut doc;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override key '{key}' does not name a table")))?;
                if i + 1 == parts.len() {
                    if !table.contains_key(*part) {
                        return Err(Error::Config(format!("unknown configuration key '{key}'")));
                    }
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                node = table.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown configuration key '{key}'")))?;
            }
        }
        let c: RunConfig = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}
