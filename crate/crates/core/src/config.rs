//! TOML run configuration.
//!
//! Sections mirror [`TrainConfig`]: `[objective]`, `[optimizer]`,
//! `[ablations]`, `[model]` (with `[model.han]`) and `[data]`. Every key is
//! optional; missing keys take the library defaults. Command-line flags are
//! applied on top of the file by the caller.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UcdError};
use crate::trainer::{Ablations, ModelDims, ThresholdMode, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub k: usize,
    pub tau: f64,
    pub jitter: f64,
    pub threshold: ThresholdMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_fraction: f64,
    pub min_token_freq: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train_fraction: TrainConfig::default().train_fraction,
            min_token_freq: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSection,
    pub optimizer: OptimizerSection,
    pub ablations: Ablations,
    pub model: ModelDims,
    pub data: DataSection,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        RunConfig::from_train(&TrainConfig::default(), 1).objective
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        RunConfig::from_train(&TrainConfig::default(), 1).optimizer
    }
}

impl RunConfig {
    pub fn from_train(c: &TrainConfig, min_token_freq: u64) -> RunConfig {
        RunConfig {
            objective: ObjectiveSection {
                lambda1: c.lambda1,
                lambda2: c.lambda2,
                lambda3: c.lambda3,
                k: c.k,
                tau: c.tau,
                jitter: c.jitter,
                threshold: c.threshold,
            },
            optimizer: OptimizerSection {
                learning_rate: c.learning_rate,
                adam_beta1: c.adam_beta1,
                adam_beta2: c.adam_beta2,
                adam_eps: c.adam_eps,
                batch_size: c.batch_size,
                epochs: c.epochs,
                seed: c.seed,
            },
            ablations: c.ablations,
            model: c.dims.clone(),
            data: DataSection {
                train_fraction: c.train_fraction,
                min_token_freq,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let (o, p) = (&self.objective, &self.optimizer);
        TrainConfig {
            lambda1: o.lambda1,
            lambda2: o.lambda2,
            lambda3: o.lambda3,
            k: o.k,
            tau: o.tau,
            batch_size: p.batch_size,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            adam_beta1: p.adam_beta1,
            adam_beta2: p.adam_beta2,
            adam_eps: p.adam_eps,
            seed: p.seed,
            ablations: self.ablations,
            dims: self.model.clone(),
            jitter: o.jitter,
            threshold: o.threshold,
            train_fraction: self.data.train_fraction,
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| UcdError::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| UcdError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
