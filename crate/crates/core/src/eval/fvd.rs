//! FVD-proxy: Fréchet distance between Gaussian fits of clip features from
//! a small autoencoder trained on real clips.

use candle_core::{DType, Device, Tensor};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffusion::nn::Linear;
use crate::diffusion::{train_loop, ParamStore, TrainConfig};
use crate::image::{Rgb8Image, Video};
use crate::{Error, Result};

pub const POOLED_SIDE: usize = 16;
pub const SAMPLED_FRAMES: usize = 5;

/// Clip summary fed to the extractor: `SAMPLED_FRAMES` evenly spaced
/// frames, box-pooled to 16×16, in `[-1, 1]`.
pub fn clip_vector(clip: &[Rgb8Image]) -> Result<Vec<f32>> {
    if clip.is_empty() {
        return Err(Error::InvalidArgument("empty clip".into()));
    }
    let (h, w) = clip[0].dims();
    if h % POOLED_SIDE != 0 || w % POOLED_SIDE != 0 || h != w {
        return Err(Error::InvalidArgument(format!("clip frames must be square multiples of {POOLED_SIDE}")));
    }
    let f = h / POOLED_SIDE;
    let mut out = Vec::with_capacity(SAMPLED_FRAMES * 3 * POOLED_SIDE * POOLED_SIDE);
    for s in 0..SAMPLED_FRAMES {
        let idx = if SAMPLED_FRAMES == 1 { 0 } else { s * (clip.len() - 1) / (SAMPLED_FRAMES - 1) };
        let img = &clip[idx];
        for c in 0..3 {
            for r in 0..POOLED_SIDE {
                for q in 0..POOLED_SIDE {
                    let mut acc = 0u32;
                    for dr in 0..f {
                        for dq in 0..f {
                            acc += img.get(r * f + dr, q * f + dq)[c] as u32;
                        }
                    }
                    out.push(acc as f32 / (f * f) as f32 / 127.5 - 1.0);
                }
            }
        }
    }
    Ok(out)
}

pub struct FeatureExtractor {
    params: ParamStore,
    enc1: Linear,
    enc2: Linear,
    dec1: Linear,
    dec2: Linear,
}

impl FeatureExtractor {
    pub const FEATURES: usize = 32;
    const HIDDEN: usize = 256;

    pub fn new(seed: u64) -> Result<Self> {
        let mut ps = ParamStore::new(seed, DType::F32);
        let d = SAMPLED_FRAMES * 3 * POOLED_SIDE * POOLED_SIDE;
        let enc1 = Linear::new(&mut ps, "enc1", d, Self::HIDDEN)?;
        let enc2 = Linear::new(&mut ps, "enc2", Self::HIDDEN, Self::FEATURES)?;
        let dec1 = Linear::new(&mut ps, "dec1", Self::FEATURES, Self::HIDDEN)?;
        let dec2 = Linear::new(&mut ps, "dec2", Self::HIDDEN, d)?;
        Ok(Self { params: ps, enc1, enc2, dec1, dec2 })
    }

    /// Fits the autoencoder to reconstruct real clips.
    pub fn fit(real: &[Video], steps: usize, seed: u64) -> Result<Self> {
        if real.is_empty() {
            return Err(Error::EmptyDataset("no clips for the feature extractor".into()));
        }
        let ex = Self::new(seed)?;
        let data = real.iter().map(|c| clip_vector(c)).collect::<Result<Vec<_>>>()?;
        let cfg = TrainConfig {
            steps,
            batch_size: 16,
            learning_rate: 1e-3,
            warmup_steps: 10,
            seed,
            log_every: 0,
            ..Default::default()
        };
        train_loop(&ex.params, &cfg, |_, rng| {
            let idx = crate::text2flow::batch_indices(data.len(), cfg.batch_size, rng);
            let x = stack(idx.iter().map(|&i| data[i].as_slice()))?;
            let recon = ex.decode(&ex.encode(&x)?)?;
            Ok((recon - &x)?.sqr()?.mean_all()?)
        })?;
        Ok(ex)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.enc2.forward(&self.enc1.forward(x)?.silu()?)
    }

    fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.dec2.forward(&self.dec1.forward(z)?.silu()?)
    }

    /// One feature row per clip.
    pub fn features(&self, clips: &[Video]) -> Result<Vec<Vec<f64>>> {
        let rows = clips.iter().map(|c| clip_vector(c)).collect::<Result<Vec<_>>>()?;
        let x = stack(rows.iter().map(|r| r.as_slice()))?;
        let z = self.encode(&x)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        Ok(z)
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f32]>) -> Result<Tensor> {
    let rows: Vec<&[f32]> = rows.collect();
    let d = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Tensor::from_vec(flat, (rows.len(), d), &Device::Cpu)?)
}

/// Mean and unbiased covariance of the rows.
pub fn gaussian_fit(rows: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("at least 2 clips per side are required".into()));
    }
    let d = rows[0].len();
    let n = rows.len();
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mu = DVector::from_fn(d, |j, _| m.column(j).mean());
    let mut c = m.clone();
    for j in 0..d {
        for i in 0..n {
            c[(i, j)] -= mu[j];
        }
    }
    let cov = c.transpose() * &c / (n as f64 - 1.0);
    Ok((mu, cov))
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let vals = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`, with the cross term evaluated
/// as `tr((S Σ₂ S)^{1/2})` for `S = Σ₁^{1/2}`.
pub fn frechet_distance(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let diff = (mu1 - mu2).norm_squared();
    let s = sqrt_psd(s1);
    let cross = sqrt_psd(&(&s * s2 * &s)).trace();
    (diff + s1.trace() + s2.trace() - 2.0 * cross).max(0.0)
}

pub fn fvd_proxy(extractor: &FeatureExtractor, real: &[Video], generated: &[Video]) -> Result<f64> {
    if real.len() < 2 || generated.len() < 2 {
        return Err(Error::InvalidArgument("FVD-proxy needs at least 2 clips per side".into()));
    }
    let (m1, s1) = gaussian_fit(&extractor.features(real)?)?;
    let (m2, s2) = gaussian_fit(&extractor.features(generated)?)?;
    Ok(frechet_distance(&m1, &s1, &m2, &s2))
}
