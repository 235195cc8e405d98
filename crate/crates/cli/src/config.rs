use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use csi_fusion::harness::ExperimentConfig;
use serde::Serialize;
use toml::{Table, Value};

/// Overlays `overrides` onto `base`, recursing into tables so a config file
/// only needs the keys it changes.
fn merge(base: &mut Table, overrides: Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Defaults, overlaid with the file at `path` if given.
pub fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default();
    let Some(path) = path else {
        return Ok(defaults);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let overrides: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut base = Table::try_from(&defaults).context("serializing defaults")?;
    merge(&mut base, overrides);
    let cfg: ExperimentConfig = base.try_into().with_context(|| format!("invalid config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Human-readable record of a run: every resolved config value plus the
/// digests of the files read and written.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: String,
    pub seed: u64,
    pub crate_version: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: &'a ExperimentConfig,
}

impl RunManifest<'_> {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, toml::to_string_pretty(self).context("serializing manifest")?)?;
        Ok(())
    }
}
