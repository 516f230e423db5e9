use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Hyperparameters of one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Tokens consumed per optimizer step (whole windows).
    pub tokens_per_batch: usize,
    /// Window length; each window gives `seq_len - 1` predictions.
    pub seq_len: usize,
    pub max_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_tokens: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Windows per forward/backward pass; bounds activation memory only.
    pub micro_rows: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tokens_per_batch: 16_384,
            seq_len: 256,
            max_lr: 2e-3,
            min_lr: 2e-4,
            warmup_steps: 50,
            total_tokens: 0,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            weight_decay: 0.1,
            grad_clip: 1.0,
            micro_rows: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.seq_len < 2 || self.seq_len - 1 > model.max_seq_len {
            return Err(Error::Config(alloc::format!(
                "window length {} must be in 2..={} for this model",
                self.seq_len,
                model.max_seq_len + 1
            )));
        }
        if self.tokens_per_batch < self.seq_len || self.tokens_per_batch % self.seq_len != 0 {
            return fail("tokens per batch must be a positive multiple of the window length");
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.max_lr && self.max_lr.is_finite()) {
            return fail("learning rates must satisfy 0 < min_lr <= max_lr");
        }
        if self.warmup_steps == 0 {
            return fail("warmup needs at least one step");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0 && self.weight_decay >= 0.0 && self.grad_clip > 0.0) {
            return fail("eps and clip must be positive, weight decay non-negative");
        }
        if self.micro_rows == 0 {
            return fail("micro batch needs at least one window");
        }
        Ok(())
    }

    /// Windows per step.
    pub fn rows(&self) -> usize {
        self.tokens_per_batch / self.seq_len
    }

    /// Whole optimizer steps that fit in `total_tokens`.
    pub fn total_steps(&self) -> usize {
        (self.total_tokens / self.tokens_per_batch as u64) as usize
    }
}

/// Learning rate at 1-based `step`: linear warmup from 0 to `max_lr` over
/// `warmup_steps`, then cosine decay reaching `min_lr` at the final step.
pub fn lr_at(step: usize, config: &TrainConfig) -> f64 {
    let w = config.warmup_steps.max(1);
    if step <= w {
        return config.max_lr * step as f64 / w as f64;
    }
    let total = config.total_steps();
    if total <= w {
        return config.max_lr;
    }
    let progress = ((step - w) as f64 / (total - w) as f64).min(1.0);
    config.min_lr + (config.max_lr - config.min_lr) * 0.5 * (1.0 + libm::cos(PI * progress))
}
