use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::DataConfig;
use super::methods::{Method, MethodConfig};
use super::sweep::SweepSpec;
use crate::error::Result;

/// Everything a run can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub methods: MethodConfig,
    pub sweep: SweepSpec,
    /// Methods run by a sweep.
    pub run: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig { caps: super::data::SizeCaps::desk(), ..DataConfig::default() },
            methods: MethodConfig::desk(),
            sweep: SweepSpec::default(),
            run: vec![Method::Constant, Method::NaiveSupervised, Method::Proposed],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.scenario.validate()?;
        self.data.window.validate()?;
        self.data.split_ratios.validate()?;
        self.methods.vicreg.validate()?;
        for tc in [&self.methods.pretrain, &self.methods.dae, &self.methods.downstream] {
            tc.validate()?;
        }
        self.methods.sma.validate()?;
        self.methods.erase.validate()?;
        self.sweep.validate(self.data.scenario.n_stations)
    }
}

/// CRC32 of a file's bytes, as lowercase hex.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(format!("{:08x}", crc32fast::hash(&std::fs::read(path)?)))
}
