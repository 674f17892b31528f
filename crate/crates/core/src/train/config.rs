use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::ModelConfig;
use crate::lyrics::SkipGramConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Generator updates.
    pub steps: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_q: f64,
    pub lambda_mi: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub d_steps_per_g_step: usize,
    /// Metrics rows and checkpoint callbacks are emitted this often.
    pub checkpoint_interval: u64,
    /// Global gradient norm limit, per network.
    pub clip_norm: f64,
    /// Feed the discriminator hard one-hot samples whose gradient is that of
    /// the relaxed sample.
    pub straight_through: bool,
    pub model: ModelConfig,
    pub embedding: SkipGramConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 16,
            steps: 2000,
            lr_g: 1e-3,
            lr_d: 1e-3,
            lr_q: 1e-3,
            lambda_mi: 0.5,
            tau_start: 1.0,
            tau_end: 0.2,
            d_steps_per_g_step: 1,
            checkpoint_interval: 100,
            clip_norm: 5.0,
            straight_through: true,
            model: ModelConfig::default(),
            embedding: SkipGramConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("lr_g", self.lr_g), ("lr_d", self.lr_d), ("lr_q", self.lr_q)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.tau_end > 0.0 && self.tau_start >= self.tau_end && self.tau_start.is_finite()) {
            return bad(format!(
                "need tau_start >= tau_end > 0, got {} and {}",
                self.tau_start, self.tau_end
            ));
        }
        if !(self.lambda_mi >= 0.0 && self.lambda_mi.is_finite()) {
            return bad(format!("lambda_mi must be non-negative, got {}", self.lambda_mi));
        }
        if self.batch_size == 0 || self.d_steps_per_g_step == 0 || self.checkpoint_interval == 0 {
            return bad("batch_size, d_steps_per_g_step and checkpoint_interval must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.model.cond_dim != 2 * self.embedding.dim {
            return bad(format!(
                "condition width {} must equal twice the embedding dim {}",
                self.model.cond_dim, self.embedding.dim
            ));
        }
        self.model.validate()
    }

    /// Exponential decay from `tau_start` at step 0 to `tau_end` at the last step.
    pub fn tau_at(&self, step: u64) -> f64 {
        if self.steps <= 1 {
            return self.tau_start;
        }
        let frac = (step.min(self.steps - 1)) as f64 / (self.steps - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }
}
