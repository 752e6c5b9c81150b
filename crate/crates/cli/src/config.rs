//! TOML configuration files.
//!
//! A run config is a [`RunConfig`] in TOML. A compare config is the same
//! file plus a `[compare]` table:
//!
//! ```toml
//! [compare]
//! strategies = ["deal_min_margin", "random"]
//! reference = "deal_min_margin"   # defaults to the first entry
//! targets = [0.8, 0.9]            # accuracies for the images-to-reach table
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use deal_core::acquisition::StrategyKind;
use deal_core::engine::RunConfig;
use deal_core::FieldError;

use crate::error::{io_error, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub strategies: Vec<StrategyKind>,
    #[serde(default)]
    pub reference: Option<StrategyKind>,
    #[serde(default)]
    pub targets: Vec<f64>,
}

impl CompareSection {
    pub fn reference(&self) -> StrategyKind {
        self.reference.unwrap_or(self.strategies[0])
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut fields = Vec::new();
        if self.strategies.len() < 2 {
            fields.push(FieldError::new("compare.strategies", "list at least two strategies"));
        }
        if let Some(r) = self.reference {
            if !self.strategies.contains(&r) {
                fields.push(FieldError::new("compare.reference", format!("{} is not among the strategies", r.name())));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(*t > 0.0 && *t < 1.0) {
                fields.push(FieldError::new(format!("compare.targets[{i}]"), format!("{t} must lie strictly between 0 and 1")));
            }
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(fields))
        }
    }
}

/// A parsed config file and the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig<T> {
    pub config: T,
    pub base_dir: PathBuf,
}

fn read_table(path: &Path) -> Result<(toml::Table, PathBuf), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let table = toml::Table::from_str(&text).map_err(|e| CliError::field("config", e.to_string()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((table, base_dir))
}

fn to_run_config(table: toml::Table, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut config: RunConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::field("config", e.message()))?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_run_config(path: &Path, seed: Option<u64>) -> Result<LoadedConfig<RunConfig>, CliError> {
    let (mut table, base_dir) = read_table(path)?;
    // A compare file can be run as a single run of its `strategy`.
    table.remove("compare");
    Ok(LoadedConfig { config: to_run_config(table, seed)?, base_dir })
}

pub fn load_compare_config(path: &Path, seed: Option<u64>) -> Result<LoadedConfig<(RunConfig, CompareSection)>, CliError> {
    let (mut table, base_dir) = read_table(path)?;
    let section = table.remove("compare").ok_or_else(|| CliError::field("compare", "missing [compare] table"))?;
    let section: CompareSection =
        section.try_into().map_err(|e: toml::de::Error| CliError::field("compare", e.message()))?;
    section.validate()?;
    Ok(LoadedConfig { config: (to_run_config(table, seed)?, section), base_dir })
}

/// `serve` settings. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    /// Dataset paths in session configs resolve against this directory.
    pub data_dir: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub allowed_origin: Option<String>,
}

pub fn load_serve_config(path: &Path) -> Result<LoadedConfig<ServeConfig>, CliError> {
    let (table, base_dir) = read_table(path)?;
    let config: ServeConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::field("config", e.message()))?;
    Ok(LoadedConfig { config, base_dir })
}
