//! Factorized space-time transformer that predicts the noise in a video.
//!
//! Per-frame input channels are `[noisy 3 | first frame 3 | mask 1]`,
//! followed by `[flow 3]` when the flow slot is enabled. The first frame is
//! broadcast to every frame and the mask is 1 on frame 0 only. Conditioning
//! channels are never noised.
//!
//! The patch head is complemented by a per-channel, step-dependent affine
//! term `a(k)·z^k + b(k)·o₀ + c(k)`. At large steps ε is close to the noisy
//! input itself, which a narrow token cannot carry when `3·p²` exceeds the
//! width; at small steps ε carries `-√ᾱ/σ` times the clean video, which for
//! static background is the first frame or a constant. The gate starts at
//! zero.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::nn::{Attention, LayerNorm, Linear, Mlp, TimeMlp};
use super::params::{Init, ParamStore};
use super::text::{TextEncoder, TokenBatch};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub frames: usize,
    pub resolution: usize,
    pub patch: usize,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub max_tokens: usize,
    pub vocab_size: usize,
    pub flow_slot: bool,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.frames == 0 || self.resolution == 0 || self.depth == 0 || self.max_tokens == 0 {
            return bad("frames, resolution, depth and max_tokens must be positive");
        }
        if self.patch == 0 || self.resolution % self.patch != 0 {
            return bad("patch must divide resolution");
        }
        if self.heads == 0 || self.width % self.heads != 0 || self.width % 2 != 0 {
            return bad("width must be even and divisible by heads");
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        if self.flow_slot {
            10
        } else {
            7
        }
    }

    pub fn patches_per_side(&self) -> usize {
        self.resolution / self.patch
    }
}

/// Conditioning for one batch.
pub struct VideoCond<'a> {
    /// `(B, 3, H, W)` in `[-1, 1]`.
    pub first_frame: &'a Tensor,
    pub text: &'a TokenBatch,
    /// `(B, F, 3, H, W)`; ignored when the flow slot is disabled.
    pub flow: Option<&'a Tensor>,
}

struct Block {
    norm_s: LayerNorm,
    attn_s: Attention,
    norm_t: LayerNorm,
    attn_t: Attention,
    norm_x: LayerNorm,
    attn_x: Attention,
    norm_m: LayerNorm,
    mlp: Mlp,
    temb: Linear,
}

pub struct Denoiser {
    cfg: DenoiserConfig,
    patch_in: Linear,
    pos_s: Tensor,
    pos_t: Tensor,
    time: TimeMlp,
    text: TextEncoder,
    blocks: Vec<Block>,
    norm_out: LayerNorm,
    patch_out: Linear,
    skip_gate: Linear,
    dtype: DType,
}

impl Denoiser {
    pub fn new(ps: &mut ParamStore, cfg: DenoiserConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.width;
        let p = cfg.patch;
        let np = cfg.patches_per_side().pow(2);
        let patch_in = Linear::new(ps, "patch_in", cfg.in_channels() * p * p, d)?;
        let pos_s = ps.get("pos_s", &[np, d], Init::Normal(0.02))?;
        let pos_t = ps.get("pos_t", &[cfg.frames, d], Init::Normal(0.02))?;
        let time = TimeMlp::new(ps, "time", d)?;
        let text = TextEncoder::new(ps, "text", cfg.vocab_size, d, cfg.max_tokens)?;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let n = |s: &str| format!("block{i}.{s}");
            blocks.push(Block {
                norm_s: LayerNorm::new(ps, &n("norm_s"), d)?,
                attn_s: Attention::new(ps, &n("attn_s"), d, d, cfg.heads)?,
                norm_t: LayerNorm::new(ps, &n("norm_t"), d)?,
                attn_t: Attention::new(ps, &n("attn_t"), d, d, cfg.heads)?,
                norm_x: LayerNorm::new(ps, &n("norm_x"), d)?,
                attn_x: Attention::new(ps, &n("attn_x"), d, d, cfg.heads)?,
                norm_m: LayerNorm::new(ps, &n("norm_m"), d)?,
                mlp: Mlp::new(ps, &n("mlp"), d, 4 * d)?,
                temb: Linear::new(ps, &n("temb"), d, d)?,
            });
        }
        let norm_out = LayerNorm::new(ps, "norm_out", d)?;
        let patch_out = Linear::with_init(ps, "patch_out", d, 3 * p * p, Init::Normal(0.02 / (d as f64).sqrt()))?;
        let skip_gate = Linear::with_init(ps, "skip_gate", d, 9, Init::Zeros)?;
        Ok(Self {
            cfg,
            patch_in,
            pos_s,
            pos_t,
            time,
            text,
            blocks,
            norm_out,
            patch_out,
            skip_gate,
            dtype: ps.dtype(),
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// Assembles the `(B, F, C, H, W)` network input.
    pub fn assemble_input(&self, noisy: &Tensor, cond: &VideoCond) -> Result<Tensor> {
        let (b, f, c, h, w) = noisy.dims5()?;
        let cfg = &self.cfg;
        if f != cfg.frames || c != 3 || h != cfg.resolution || w != cfg.resolution {
            return Err(Error::shape(
                format!("(B, {}, 3, {r}, {r})", cfg.frames, r = cfg.resolution),
                format!("{:?}", noisy.dims()),
            ));
        }
        if cond.first_frame.dims() != [b, 3, h, w] {
            return Err(Error::shape(format!("({b}, 3, {h}, {w})"), format!("{:?}", cond.first_frame.dims())));
        }
        let dev = noisy.device();
        let first = cond.first_frame.unsqueeze(1)?.broadcast_as((b, f, 3, h, w))?;
        let mut mask = vec![0f32; f];
        mask[0] = 1.0;
        let mask = Tensor::from_vec(mask, (1, f, 1, 1, 1), dev)?
            .to_dtype(self.dtype)?
            .broadcast_as((b, f, 1, h, w))?;
        let mut parts = vec![noisy.clone(), first, mask];
        if cfg.flow_slot {
            let flow = cond
                .flow
                .ok_or_else(|| Error::InvalidArgument("flow-conditioned model needs a flow video".into()))?;
            if flow.dims() != noisy.dims() {
                return Err(Error::shape(format!("{:?}", noisy.dims()), format!("{:?}", flow.dims())));
            }
            parts.push(flow.clone());
        }
        Ok(Tensor::cat(&parts, 2)?)
    }

    /// Predicts ε for noisy videos `(B, F, 3, H, W)` at steps `ks`.
    pub fn forward(&self, noisy: &Tensor, ks: &[usize], cond: &VideoCond) -> Result<Tensor> {
        let x = self.assemble_input(noisy, cond)?;
        let (b, f, c, h, w) = x.dims5()?;
        if ks.len() != b {
            return Err(Error::shape(b, ks.len()));
        }
        let cfg = &self.cfg;
        let p = cfg.patch;
        let (hp, wp) = (h / p, w / p);
        let np = hp * wp;
        let d = cfg.width;

        // patchify to (B, F·Np, C·p·p)
        let tokens = x
            .reshape((b * f, c, hp, p, wp, p))?
            .permute([0, 2, 4, 1, 3, 5])?
            .reshape((b, f, np, c * p * p))?;
        let mut z = self.patch_in.forward(&tokens)?;
        z = z.broadcast_add(&self.pos_s.unsqueeze(0)?)?;
        z = z.broadcast_add(&self.pos_t.unsqueeze(1)?)?;
        let temb = self.time.forward(ks, self.dtype)?; // (B, d)
        let text = self.text.forward(&cond.text.ids)?;
        let mut z = z.reshape((b, f * np, d))?;

        for blk in &self.blocks {
            let t = blk.temb.forward(&candle_nn::ops::silu(&temb)?)?.unsqueeze(1)?;
            z = z.broadcast_add(&t)?;
            // spatial
            let zs = blk.norm_s.forward(&z)?.reshape((b * f, np, d))?;
            z = (z + blk.attn_s.forward(&zs, &zs, None)?.reshape((b, f * np, d))?)?;
            // temporal
            let zt = blk
                .norm_t
                .forward(&z)?
                .reshape((b, f, np, d))?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((b * np, f, d))?;
            let yt = blk
                .attn_t
                .forward(&zt, &zt, None)?
                .reshape((b, np, f, d))?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((b, f * np, d))?;
            z = (z + yt)?;
            // text
            let zx = blk.norm_x.forward(&z)?;
            z = (z + blk.attn_x.forward(&zx, &text, Some(&cond.text.bias))?)?;
            z = (&z + blk.mlp.forward(&blk.norm_m.forward(&z)?)?)?;
        }

        let out = self.patch_out.forward(&self.norm_out.forward(&z)?)?; // (B, F·Np, 3p²)
        let out = out
            .reshape((b * f, hp, wp, 3, p, p))?
            .permute([0, 3, 1, 4, 2, 5])?
            .reshape((b, f, 3, h, w))?;
        let gate = self.skip_gate.forward(&candle_nn::ops::silu(&temb)?)?.reshape((b, 1, 9, 1, 1))?;
        let first = cond.first_frame.unsqueeze(1)?;
        let out = (out + noisy.broadcast_mul(&gate.narrow(2, 0, 3)?)?)?
            .broadcast_add(&first.broadcast_mul(&gate.narrow(2, 3, 3)?)?)?
            .broadcast_add(&gate.narrow(2, 6, 3)?)?;
        Ok(out)
    }
}

/// Stacks frames into a `(F, 3, H, W)` array in `[-1, 1]`.
pub fn video_to_vec(video: &[crate::image::Rgb8Image]) -> Vec<f32> {
    let mut out = Vec::new();
    for frame in video {
        out.extend(frame_to_vec(frame));
    }
    out
}

/// One frame as `(3, H, W)` in `[-1, 1]`.
pub fn frame_to_vec(frame: &crate::image::Rgb8Image) -> Vec<f32> {
    let (h, w) = frame.dims();
    let raw = frame.as_raw();
    let mut out = vec![0f32; 3 * h * w];
    for i in 0..h * w {
        for c in 0..3 {
            out[c * h * w + i] = raw[i * 3 + c] as f32 / 127.5 - 1.0;
        }
    }
    out
}

/// Inverse of [`video_to_vec`] for a `(F, 3, H, W)` array.
pub fn vec_to_video(data: &[f32], frames: usize, h: usize, w: usize) -> Result<Vec<crate::image::Rgb8Image>> {
    if data.len() != frames * 3 * h * w {
        return Err(Error::shape(frames * 3 * h * w, data.len()));
    }
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let chunk = &data[f * 3 * h * w..(f + 1) * 3 * h * w];
        let mut hwc = vec![0f32; 3 * h * w];
        for i in 0..h * w {
            for c in 0..3 {
                hwc[i * 3 + c] = chunk[c * h * w + i];
            }
        }
        out.push(crate::image::Rgb8Image::from_signed_unit(h, w, &hwc)?);
    }
    Ok(out)
}
