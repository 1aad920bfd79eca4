use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Architecture and optimizer settings. Defaults are desk scale; the
/// published full-scale values are available from [`ModelConfig::full_scale`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Width of the two output heads.
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Peak learning rate, reached at the end of warmup.
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub max_atoms: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            hidden_dim: 64,
            ffn_dim: 128,
            layers: 4,
            heads: 8,
            learning_rate: 1e-3,
            warmup_steps: 100,
            batch_size: 32,
            max_atoms: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        ModelConfig {
            embed_dim: 128,
            hidden_dim: 128,
            ffn_dim: 2048,
            layers: 12,
            heads: 32,
            learning_rate: 1e-4,
            warmup_steps: 4000,
            batch_size: 32,
            max_atoms: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.ffn_dim == 0 || self.heads == 0 {
            return fail("dimensions must be positive".into());
        }
        if self.embed_dim % self.heads != 0 {
            return fail(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.embed_dim % 2 != 0 {
            return fail("embed_dim must be even for the time embedding".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.warmup_steps == 0 || self.batch_size == 0 || self.max_atoms == 0 {
            return fail("warmup_steps, batch_size and max_atoms must be positive".into());
        }
        Ok(())
    }

    /// Noam schedule scaled so that the peak equals `learning_rate`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let factor = self.learning_rate * ((self.embed_dim * self.warmup_steps) as f64).sqrt();
        noam_lr(step, self.embed_dim, self.warmup_steps, factor)
    }
}

/// `factor · d^−0.5 · min(step^−0.5, step · warmup^−1.5)`, steps counted from 1.
pub fn noam_lr(step: usize, d_model: usize, warmup: usize, factor: f64) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup as f64;
    factor * (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))
}
