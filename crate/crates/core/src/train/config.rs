use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyper-parameters. The JSON form uses these field names; missing
/// fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_steps: f64,
    pub decay_rate: f64,
    pub segment_frames: usize,
    pub batch: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            decay_steps: 20_000.0,
            decay_rate: 0.99,
            segment_frames: 128,
            batch: 1,
            max_steps: 1_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("decay_steps", self.decay_steps),
            ("decay_rate", self.decay_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "config {name} must be positive, got {v}"
                )));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument("adam betas must be below 1".into()));
        }
        if self.segment_frames == 0 {
            return Err(Error::InvalidArgument("segment_frames must be >= 1".into()));
        }
        if self.batch != 1 {
            return Err(Error::InvalidArgument(format!(
                "only batch = 1 is supported, got {}",
                self.batch
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_overrides() {
        let cfg = TrainConfig::from_json(r#"{"max_steps": 5, "seed": 3}"#).unwrap();
        assert_eq!(cfg.max_steps, 5);
        assert_eq!(cfg.lr0, 0.001);
        assert_eq!(cfg.segment_frames, 128);
        assert!(TrainConfig::from_json(r#"{"lr": 1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"segment_frames": 0}"#).is_err());
    }
}
