use serde::{Deserialize, Serialize};

use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::objective::ObjectiveConfig;
use crate::synthgen::DataConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Scales `base_lr`; small models need a larger step than 2e-5.
    pub lr_multiplier: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of labeled pairs held out for per-epoch validation.
    pub validation_fraction: f64,
    /// Random shifts of up to two pixels on training images.
    pub translate_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_epochs: 10,
            phase2_epochs: 50,
            batch_size: 4,
            base_lr: 2e-5,
            lr_multiplier: 50.0,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 1,
            validation_fraction: 0.1,
            translate_augment: false,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.lr_multiplier
    }

    /// Every violated bound, keyed by field name.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push(("batch_size", "must be at least 1".to_string()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            out.push(("base_lr", "must be positive".to_string()));
        }
        if !(self.lr_multiplier > 0.0 && self.lr_multiplier.is_finite()) {
            out.push(("lr_multiplier", "must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            out.push(("warmup_fraction", "must lie in [0, 1)".to_string()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            out.push(("weight_decay", "must be non-negative".to_string()));
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                out.push((key, "must lie in [0, 1)".to_string()));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(("epsilon", "must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            out.push(("validation_fraction", "must lie in [0, 1)".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        join_problems("train", self.problems())
    }
}

fn join_problems(section: &str, problems: Vec<(&'static str, String)>) -> Result<()> {
    if problems.is_empty() {
        return Ok(());
    }
    let msgs: Vec<String> = problems.iter().map(|(k, m)| format!("{section}.{k}: {m}")).collect();
    Err(Error::Config(msgs.join("; ")))
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.objective.validate()?;
        self.train.validate()
    }
}
