//! Run configuration: one TOML file with a section per stage. Unknown keys
//! are rejected; missing keys take their defaults.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [preprocess]
//! target_spacing = [0.68, 0.68, 5.0]
//!
//! [roi]
//! stack_size = 16
//!
//! [model]
//! architecture = "stub"
//!
//! [train]
//! max_epochs = 30
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::provenance::hash_json;
use crate::roi::{AugmentConfig, RoiConfig};
use crate::train::TrainConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub roi: RoiConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            preprocess: PreprocessConfig::default(),
            roi: RoiConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.preprocess.validate()?;
        self.roi.validate()?;
        self.augment.validate()?;
        self.train.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that affects results.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn defaults_and_partial_files() {
        let d = RunConfig::default();
        assert_eq!(d.train.batch_size, 32);
        assert_eq!(d.train.weight_decay, 0.0005);
        assert_eq!(d.train.initial_lr, 0.0005);
        assert_eq!(d.train.lr_decay_base, 0.97);
        assert_eq!(d.train.folds, 5);
        assert_eq!(d.preprocess.target_spacing, [0.34, 0.34, 5.0]);
        assert_eq!(d.roi.stack_size, 224);
        let c = RunConfig::parse("seed = 4\n[model]\narchitecture = \"stub\"\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.architecture, Architecture::Stub);
        assert_eq!(RunConfig::parse(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(matches!(RunConfig::parse("sede = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nbatchsize = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("schema_version = 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nfolds = 1"), Err(Error::Config(_))));
    }
}
