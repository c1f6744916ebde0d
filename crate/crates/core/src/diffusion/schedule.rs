//! Cosine noise schedule, forward perturbation and the deterministic DDIM
//! reverse step.

use candle_core::Tensor;

use crate::{Error, Result};

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_SAMPLE_STEPS: usize = 50;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule: `ᾱ(t) = cos²(((t/K + s)/(1 + s))·π/2) / ᾱ(0)`,
    /// `β_k = min(1 − ᾱ(k+1)/ᾱ(k), 0.999)`.
    pub fn cosine(k: usize) -> Self {
        let f = |t: f64| {
            let x = (t / k as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let betas: Vec<f64> = (0..k)
            .map(|i| (1.0 - f(i as f64 + 1.0) / f(i as f64)).min(MAX_BETA))
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Self {
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Self { betas, alpha_bars }
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k]
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidArgument("empty schedule".into()));
        }
        if self.betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidArgument("betas must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Descending training indices visited by an `steps`-step sampler; the
    /// last index is always `K − 1`.
    pub fn sampling_indices(&self, steps: usize) -> Vec<usize> {
        let k = self.len();
        let steps = steps.clamp(1, k);
        let mut idx: Vec<usize> = (1..=steps).map(|j| j * k / steps - 1).collect();
        idx.dedup();
        idx.reverse();
        idx
    }
}

/// `z_k = √ᾱ·z0 + √(1−ᾱ)·ε` for an explicit `ᾱ`.
pub fn perturb_with(alpha_bar: f64, z0: &[f32], eps: &[f32]) -> Result<Vec<f32>> {
    if z0.len() != eps.len() {
        return Err(Error::shape(z0.len(), eps.len()));
    }
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    Ok(z0
        .iter()
        .zip(eps)
        .map(|(&z, &e)| (a * z as f64 + b * e as f64) as f32)
        .collect())
}

pub fn perturb(schedule: &NoiseSchedule, z0: &[f32], k: usize, eps: &[f32]) -> Result<Vec<f32>> {
    if k >= schedule.len() {
        return Err(Error::InvalidArgument(format!(
            "step {k} outside schedule of {}",
            schedule.len()
        )));
    }
    perturb_with(schedule.alpha_bar(k), z0, eps)
}

/// Batched perturbation: `z0`, `eps` are `(B, ...)`, one step per row.
pub fn perturb_tensor(
    schedule: &NoiseSchedule,
    z0: &Tensor,
    ks: &[usize],
    eps: &Tensor,
) -> Result<Tensor> {
    if z0.dims() != eps.dims() {
        return Err(Error::shape(format!("{:?}", z0.dims()), format!("{:?}", eps.dims())));
    }
    let b = z0.dim(0)?;
    if ks.len() != b {
        return Err(Error::shape(b, ks.len()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k >= schedule.len()) {
        return Err(Error::InvalidArgument(format!("step {k} outside schedule")));
    }
    let mut bshape = vec![1usize; z0.rank()];
    bshape[0] = b;
    let dev = z0.device();
    let sa: Vec<f64> = ks.iter().map(|&k| schedule.alpha_bar(k).sqrt()).collect();
    let sb: Vec<f64> = ks.iter().map(|&k| (1.0 - schedule.alpha_bar(k)).sqrt()).collect();
    let sa = Tensor::from_vec(sa, bshape.as_slice(), dev)?.to_dtype(z0.dtype())?;
    let sb = Tensor::from_vec(sb, bshape.as_slice(), dev)?.to_dtype(z0.dtype())?;
    Ok((z0.broadcast_mul(&sa)? + eps.broadcast_mul(&sb)?)?)
}

/// One deterministic DDIM update from `alpha_bar` to `alpha_bar_prev`,
/// with the clean estimate clipped to `[-1, 1]`. Returns `(x_prev, x0_hat)`.
pub fn ddim_step(x: &Tensor, eps: &Tensor, alpha_bar: f64, alpha_bar_prev: f64) -> Result<(Tensor, Tensor)> {
    let x0 = ((x - eps.affine((1.0 - alpha_bar).sqrt(), 0.0)?)?.affine(1.0 / alpha_bar.sqrt(), 0.0))?;
    let x0 = x0.clamp(-1.0, 1.0)?;
    let prev = (x0.affine(alpha_bar_prev.sqrt(), 0.0)? + eps.affine((1.0 - alpha_bar_prev).sqrt(), 0.0)?)?;
    Ok((prev, x0))
}
