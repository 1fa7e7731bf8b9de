//! Encoder, probe and end-to-end trainers sharing one early-stopping rule.

mod early_stop;
mod models;
mod trainers;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use early_stop::{early_stop, StopDecision, StopReason};
pub use models::{
    BaselineModel, Classifier, EncoderModel, MajorityClassifier, ProbeModel, ProbedEncoder,
    ENCODER_UNITS, N_CLASSES,
};
pub use trainers::{
    train_encoder_scl, train_encoder_scl_with, train_end_to_end, train_probe, TrainReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            temperature: 0.1,
            patience_epochs: 10,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size == 0 || self.patience_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size, patience and max epochs must be positive".into(),
            ));
        }
        if self.patience_epochs > self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) exceeds max epochs ({})",
                self.patience_epochs, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.patience_epochs, 10);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::default();
        for bad in [
            TrainConfig { lr: 0.0, ..base.clone() },
            TrainConfig { temperature: 0.0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { patience_epochs: 20, max_epochs: 10, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
