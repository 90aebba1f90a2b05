use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization and augmentation settings. Read from a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_peak: f64,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    /// Replaces the model config's dropout while training.
    pub dropout: f64,
    pub augment: bool,
    pub aug_scale_range: [f64; 2],
    pub aug_drop_frac: f64,
    pub traj_loss_weight: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_peak: 5e-4,
            betas: [0.9, 0.95],
            adam_eps: 1e-8,
            weight_decay: 1e-4,
            warmup_epochs: 1,
            total_epochs: 40,
            batch_size: 64,
            dropout: 0.1,
            augment: true,
            aug_scale_range: [0.8, 1.2],
            aug_drop_frac: 0.10,
            traj_loss_weight: 10.0,
            focal_alpha: 0.75,
            focal_gamma: 2.0,
            huber_delta: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr_peak.is_finite() && self.lr_peak >= 0.0) {
            return bad("lr_peak must be finite and non-negative");
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("adam_eps must be positive and weight_decay non-negative");
        }
        if self.total_epochs == 0 || self.batch_size == 0 {
            return bad("total_epochs and batch_size must be positive");
        }
        if self.warmup_epochs > self.total_epochs {
            return bad("warmup_epochs exceeds total_epochs");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        let [lo, hi] = self.aug_scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("aug_scale_range must be positive and ordered");
        }
        if !(0.0..1.0).contains(&self.aug_drop_frac) {
            return bad("aug_drop_frac must lie in [0, 1)");
        }
        if !(self.focal_alpha > 0.0 && self.focal_gamma >= 0.0 && self.huber_delta > 0.0) {
            return bad("focal and huber parameters out of range");
        }
        if !(self.traj_loss_weight >= 0.0) {
            return bad("traj_loss_weight must be non-negative");
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::parse(origin, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }
}
