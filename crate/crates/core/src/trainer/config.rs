use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::augment::AugmentSpec;
use crate::error::{Error, Result};
use crate::vit::ModelConfig;

/// Training run settings, read from TOML. Every key is optional:
///
/// ```toml
/// batch_size = 32
/// resize_to = 256
/// crop_to = 224
/// learning_rate = 1e-4
/// epochs = 10
/// seed = "0"
/// freeze_trunk = false
/// [model]
/// image_size = 224
/// # ...
/// [augment]
/// seed = "0"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub resize_to: usize,
    /// Must equal `model.image_size`.
    pub crop_to: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Stop after this many optimiser steps even mid-epoch.
    pub max_steps: Option<u64>,
    #[serde(with = "crate::seedfmt")]
    pub seed: u64,
    /// Reshuffle the training set every epoch.
    pub shuffle: bool,
    /// Train only the regression head.
    pub freeze_trunk: bool,
    pub model: ModelConfig,
    pub augment: AugmentSpec,
    /// Checkpoint directory to start from instead of random initialisation.
    pub init: Option<PathBuf>,
    /// Replace the head of `init` with a fresh one.
    pub reinit_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            resize_to: 256,
            crop_to: 224,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            epochs: 10,
            max_steps: None,
            seed: 0,
            shuffle: true,
            freeze_trunk: false,
            model: ModelConfig::base(),
            augment: AugmentSpec::default(),
            init: None,
            reinit_head: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.augment.validate()?;
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.crop_to > self.resize_to {
            return Err(Error::Config(format!(
                "crop_to {} exceeds resize_to {}",
                self.crop_to, self.resize_to
            )));
        }
        if self.crop_to != self.model.image_size {
            return Err(Error::Config(format!(
                "crop_to {} must equal the model input size {}",
                self.crop_to, self.model.image_size
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(m) => Error::Toml(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(init), Some(dir)) = (&cfg.init, path.parent()) {
            if init.is_relative() {
                cfg.init = Some(dir.join(init));
            }
        }
        Ok(cfg)
    }
}
