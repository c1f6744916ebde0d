//! Optimizer loop shared by every diffusion model.

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::rng::SplitMix64;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 4,
            learning_rate: 1e-4,
            warmup_steps: 100,
            weight_decay: 0.0,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Linear warm-up then constant.
    /// Linear warmup, then cosine decay to a tenth of the peak at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.learning_rate * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

/// Runs `cfg.steps` AdamW updates. `loss_fn(step, rng)` builds the scalar
/// loss for one minibatch; the RNG is derived from the seed and step, so a
/// run is reproducible. Returns the loss history.
pub fn train_loop<F>(params: &ParamStore, cfg: &TrainConfig, mut loss_fn: F) -> Result<Vec<f32>>
where
    F: FnMut(usize, &mut SplitMix64) -> Result<Tensor>,
{
    cfg.validate()?;
    let mut opt = AdamW::new(
        params.vars(),
        ParamsAdamW {
            lr: cfg.lr_at(0),
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    )?;
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = SplitMix64::derive(cfg.seed, &[0x7452_4149_4e00, step as u64]);
        let loss = loss_fn(step, &mut rng)?;
        let value = loss.to_dtype(candle_core::DType::F32)?.to_scalar::<f32>()?;
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        opt.set_learning_rate(cfg.lr_at(step));
        opt.backward_step(&loss)?;
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            log::info!("step {step} loss {value:.5}");
        }
        history.push(value);
    }
    Ok(history)
}

/// Mean over the last `n` entries.
pub fn tail_mean(history: &[f32], n: usize) -> f32 {
    let n = n.min(history.len()).max(1);
    history[history.len().saturating_sub(n)..].iter().sum::<f32>() / n as f32
}
