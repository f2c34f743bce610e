use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::datagen::GenConfig;
use crate::evalkit::GridSpec;
use crate::policy::TrainConfig;

/// Every tunable of the tool, one section per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub datagen: GenConfig,
    pub train: TrainConfig,
    pub eval: GridSpec,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads a config file, a run manifest (its `config` table is used) or
    /// an empty file (all defaults).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let table = read_table(path)?;
        let table = unwrap_manifest(table);
        table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn unwrap_manifest(mut table: toml::Table) -> toml::Table {
    if table.contains_key("tool_version") {
        if let Some(toml::Value::Table(cfg)) = table.remove("config") {
            return cfg;
        }
    }
    table
}

/// Loads a section-sized file such as a grid: either the bare section, or a
/// full config / manifest from which `section` is taken.
pub fn load_section<T: DeserializeOwned>(path: &Path, section: &str) -> Result<T, CliError> {
    let mut table = unwrap_manifest(read_table(path)?);
    let inner = match table.remove(section) {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(CliError::Config(format!("{}: `{section}` is not a table", path.display()))),
        None => table,
    };
    inner
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))
}

/// Provenance record written once per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Arguments after the program name.
    pub command: Vec<String>,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    /// SHA-256 of every checkpoint the run read or wrote, by file name.
    #[serde(default)]
    pub checkpoints: BTreeMap<String, String>,
    pub duration_secs: f64,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: RunConfig) -> Self {
        Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::new(),
            dataset_sha256: None,
            checkpoints: BTreeMap::new(),
            duration_secs: 0.0,
            config,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
