//! Goal-conditioned action denoiser: two convolutional image encoders, a
//! proprioception input and a residual MLP over the flattened chunk.
//!
//! The MLP output is added to a per-entry affine term
//! `a(k)⊙x_k + b(k)⊙p + c(k)`, where `p` is the proprioception tiled over
//! the chunk and the coefficients come from the step embedding. It starts
//! at zero and lets the network pass the noisy chunk through at high noise
//! without squeezing it through the hidden width.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::diffusion::nn::{Conv2d, LayerNorm, Linear, TimeMlp};
use crate::diffusion::params::{Init, ParamStore};
use crate::dataset::ACTION_DIM;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetConfig {
    pub resolution: usize,
    pub n_max: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    /// Channel widths of the four stride-2 convolutions.
    pub channels: [usize; 4],
    /// `false` builds the goal-free baseline.
    pub use_goal: bool,
}

impl PolicyNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 16 != 0 {
            return Err(Error::Config("policy resolution must be a positive multiple of 16".into()));
        }
        if self.n_max == 0 || self.hidden == 0 || self.feature_dim == 0 || self.channels.contains(&0) {
            return Err(Error::Config("policy sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn chunk_len(&self) -> usize {
        self.n_max * ACTION_DIM
    }
}

struct Encoder {
    convs: Vec<Conv2d>,
    proj: Linear,
}

impl Encoder {
    fn new(ps: &mut ParamStore, name: &str, cfg: &PolicyNetConfig) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, &c) in cfg.channels.iter().enumerate() {
            convs.push(Conv2d::new(ps, &format!("{name}.conv{i}"), cin, c, 4, 2, 1)?);
            cin = c;
        }
        let side = cfg.resolution / 16;
        let proj = Linear::new(ps, &format!("{name}.proj"), cin * side * side, cfg.feature_dim)?;
        Ok(Self { convs, proj })
    }

    /// `(B, 3, H, W)` to `(B, feature_dim)`.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for c in &self.convs {
            h = candle_nn::ops::silu(&c.forward(&h)?)?;
        }
        self.proj.forward(&h.flatten_from(1)?)
    }
}

struct ResBlock {
    norm: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

pub struct PolicyNet {
    cfg: PolicyNetConfig,
    obs: Encoder,
    goal: Option<Encoder>,
    input: Linear,
    time: TimeMlp,
    blocks: Vec<ResBlock>,
    norm_out: LayerNorm,
    out: Linear,
    skip_gate: Linear,
}

pub struct PolicyCond<'a> {
    /// `(B, 3, H, W)` in `[-1, 1]`.
    pub obs: &'a Tensor,
    pub goal: Option<&'a Tensor>,
    /// `(B, 6)` current joints and grippers, normalized like actions.
    pub proprio: &'a Tensor,
}

impl PolicyNet {
    pub fn new(ps: &mut ParamStore, cfg: PolicyNetConfig) -> Result<Self> {
        cfg.validate()?;
        let obs = Encoder::new(ps, "obs_enc", &cfg)?;
        let goal = if cfg.use_goal { Some(Encoder::new(ps, "goal_enc", &cfg)?) } else { None };
        let feats = cfg.feature_dim * if cfg.use_goal { 2 } else { 1 };
        let h = cfg.hidden;
        let input = Linear::new(ps, "input", cfg.chunk_len() + feats + ACTION_DIM, h)?;
        let time = TimeMlp::new(ps, "time", h)?;
        let mut blocks = Vec::new();
        for i in 0..cfg.blocks {
            blocks.push(ResBlock {
                norm: LayerNorm::new(ps, &format!("res{i}.norm"), h)?,
                fc1: Linear::new(ps, &format!("res{i}.fc1"), h, 2 * h)?,
                fc2: Linear::new(ps, &format!("res{i}.fc2"), 2 * h, h)?,
            });
        }
        let norm_out = LayerNorm::new(ps, "norm_out", h)?;
        let out = Linear::with_init(ps, "out", h, cfg.chunk_len(), Init::Normal(0.02 / (h as f64).sqrt()))?;
        let skip_gate = Linear::with_init(ps, "skip_gate", h, 3 * cfg.chunk_len(), Init::Zeros)?;
        Ok(Self { cfg, obs, goal, input, time, blocks, norm_out, out, skip_gate })
    }

    pub fn config(&self) -> &PolicyNetConfig {
        &self.cfg
    }

    /// Image features, computed once per act call.
    pub fn encode(&self, cond: &PolicyCond) -> Result<Tensor> {
        let mut parts = vec![self.obs.forward(cond.obs)?];
        if let Some(enc) = &self.goal {
            let g = cond.goal.ok_or_else(|| Error::InvalidArgument("goal image required".into()))?;
            parts.push(enc.forward(g)?);
        }
        parts.push(cond.proprio.clone());
        Ok(Tensor::cat(&parts, 1)?)
    }

    /// Predicts ε for noisy chunks `(B, n_max·6)` given encoded features.
    pub fn forward_encoded(&self, noisy: &Tensor, ks: &[usize], feats: &Tensor, dtype: DType) -> Result<Tensor> {
        let x = Tensor::cat(&[noisy, feats], 1)?;
        let mut h = self.input.forward(&x)?;
        let temb = self.time.forward(ks, dtype)?;
        h = h.broadcast_add(&temb)?;
        for b in &self.blocks {
            let y = b.fc2.forward(&b.fc1.forward(&b.norm.forward(&h)?)?.silu()?)?;
            h = (h + y)?;
        }
        let out = self.out.forward(&self.norm_out.forward(&h)?)?;
        let cl = self.cfg.chunk_len();
        let gate = self.skip_gate.forward(&candle_nn::ops::silu(&temb)?)?;
        let gate = if gate.dim(0)? == noisy.dim(0)? { gate } else { gate.broadcast_as((noisy.dim(0)?, 3 * cl))?.contiguous()? };
        // Proprioception is the last ACTION_DIM feature columns.
        let p = feats.narrow(1, feats.dim(1)? - ACTION_DIM, ACTION_DIM)?.repeat((1, self.cfg.n_max))?;
        let out = (out + noisy.mul(&gate.narrow(1, 0, cl)?)?)?;
        let out = (out + p.mul(&gate.narrow(1, cl, cl)?)?)?;
        Ok((out + gate.narrow(1, 2 * cl, cl)?)?)
    }

    pub fn forward(&self, noisy: &Tensor, ks: &[usize], cond: &PolicyCond, dtype: DType) -> Result<Tensor> {
        let feats = self.encode(cond)?;
        self.forward_encoded(noisy, ks, &feats, dtype)
    }
}
