//! A conditioned video diffusion model: network, schedule and vocabulary
//! bundled with the training loss and the DDIM sampler.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use super::checkpoint::Checkpoint;
use super::denoiser::{Denoiser, DenoiserConfig, VideoCond};
use super::params::ParamStore;
use super::schedule::{ddim_step, perturb_tensor, NoiseSchedule};
use super::text::{TokenBatch, Vocabulary};
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// One training example, arrays in `[-1, 1]`, channel-major per frame.
#[derive(Debug, Clone)]
pub struct VideoExample {
    /// `(3, H, W)`.
    pub first_frame: Vec<f32>,
    /// `(F, 3, H, W)`.
    pub target: Vec<f32>,
    /// `(F, 3, H, W)` when the model has a flow slot.
    pub flow: Option<Vec<f32>>,
    pub instruction: String,
}

pub struct VideoDiffusion {
    kind: String,
    params: ParamStore,
    net: Denoiser,
    schedule: NoiseSchedule,
    vocab: Vocabulary,
}

impl VideoDiffusion {
    pub fn new(kind: &str, cfg: DenoiserConfig, vocab: Vocabulary, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        Self::with_dtype(kind, cfg, vocab, schedule, seed, DType::F32)
    }

    pub fn with_dtype(
        kind: &str,
        mut cfg: DenoiserConfig,
        vocab: Vocabulary,
        schedule: NoiseSchedule,
        seed: u64,
        dtype: DType,
    ) -> Result<Self> {
        schedule.validate()?;
        cfg.vocab_size = vocab.size();
        let mut params = ParamStore::new(seed, dtype);
        let net = Denoiser::new(&mut params, cfg)?;
        Ok(Self { kind: kind.to_string(), params, net, schedule, vocab })
    }

    pub fn config(&self) -> &DenoiserConfig {
        self.net.config()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn net(&self) -> &Denoiser {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn dtype(&self) -> DType {
        self.params.dtype()
    }

    fn frame_len(&self) -> usize {
        3 * self.config().resolution.pow(2)
    }

    pub fn tokens(&self, texts: &[&str]) -> Result<TokenBatch> {
        TokenBatch::new(&self.vocab, texts, self.config().max_tokens, self.dtype())
    }

    fn stack(&self, rows: Vec<&[f32]>, per_row: &[usize]) -> Result<Tensor> {
        let n: usize = per_row.iter().product();
        let mut flat = Vec::with_capacity(rows.len() * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::shape(n, r.len()));
            }
            flat.extend_from_slice(r);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(per_row);
        Ok(Tensor::from_vec(flat, shape, &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    fn video_shape(&self) -> [usize; 4] {
        let r = self.config().resolution;
        [self.config().frames, 3, r, r]
    }

    fn batch_tensors(&self, batch: &[&VideoExample]) -> Result<(Tensor, Tensor, Option<Tensor>)> {
        let r = self.config().resolution;
        let vs = self.video_shape();
        let z0 = self.stack(batch.iter().map(|e| e.target.as_slice()).collect(), &vs)?;
        let first = self.stack(batch.iter().map(|e| e.first_frame.as_slice()).collect(), &[3, r, r])?;
        let flow = if self.config().flow_slot {
            let rows = batch
                .iter()
                .map(|e| e.flow.as_deref().ok_or_else(|| Error::InvalidArgument("example lacks flow".into())))
                .collect::<Result<Vec<_>>>()?;
            Some(self.stack(rows, &vs)?)
        } else {
            None
        };
        Ok((z0, first, flow))
    }

    /// ε-prediction MSE over the noisy video channels for a minibatch.
    pub fn loss(&self, batch: &[&VideoExample], rng: &mut SplitMix64) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("empty minibatch".into()));
        }
        let (z0, first, flow) = self.batch_tensors(batch)?;
        let ks: Vec<usize> = batch.iter().map(|_| rng.below(self.schedule.len())).collect();
        let eps = rng.normals_f32(z0.elem_count());
        self.loss_inner(batch, z0, first, flow, &ks, eps)
    }

    /// Loss at fixed steps `ks` (one per example) and noise `eps`.
    pub fn loss_at(&self, batch: &[&VideoExample], ks: &[usize], eps: Vec<f32>) -> Result<Tensor> {
        if batch.is_empty() || ks.len() != batch.len() {
            return Err(Error::InvalidArgument("one step per example is required".into()));
        }
        let (z0, first, flow) = self.batch_tensors(batch)?;
        self.loss_inner(batch, z0, first, flow, ks, eps)
    }

    /// Noise-averaged loss for reporting: `draws` passes whose steps are
    /// spread evenly over the schedule, with noise from `seed`.
    pub fn eval_loss(&self, batch: &[&VideoExample], draws: usize, seed: u64) -> Result<f64> {
        let draws = draws.max(1);
        let n = draws * batch.len();
        let k_total = self.schedule.len();
        let mut rng = SplitMix64::new(seed);
        let (z0, first, flow) = self.batch_tensors(batch)?;
        let mut total = 0.0;
        for i in 0..draws {
            // Interleave so each pass covers the whole schedule.
            let ks: Vec<usize> = (0..batch.len()).map(|j| ((j * draws + i) * k_total + k_total / 2) / n).collect();
            let eps = rng.normals_f32(z0.elem_count());
            let l = self.loss_inner(batch, z0.clone(), first.clone(), flow.clone(), &ks, eps)?;
            total += l.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        }
        Ok(total / draws as f64)
    }

    fn loss_inner(
        &self,
        batch: &[&VideoExample],
        z0: Tensor,
        first: Tensor,
        flow: Option<Tensor>,
        ks: &[usize],
        eps: Vec<f32>,
    ) -> Result<Tensor> {
        if eps.len() != z0.elem_count() || ks.iter().any(|&k| k >= self.schedule.len()) {
            return Err(Error::InvalidArgument("noise length or step out of range".into()));
        }
        let eps = Tensor::from_vec(eps, z0.dims(), &Device::Cpu)?.to_dtype(self.dtype())?;
        let zk = perturb_tensor(&self.schedule, &z0, ks, &eps)?;
        let texts: Vec<&str> = batch.iter().map(|e| e.instruction.as_str()).collect();
        let tokens = self.tokens(&texts)?;
        let cond = VideoCond { first_frame: &first, text: &tokens, flow: flow.as_ref() };
        let pred = self.net.forward(&zk, ks, &cond)?;
        Ok((pred - eps)?.sqr()?.mean_all()?)
    }

    /// Deterministic DDIM sampling. Returns `(B, F, 3, H, W)` in `[-1, 1]`
    /// as a flat vector per batch row.
    pub fn sample(
        &self,
        first_frames: &[&[f32]],
        instructions: &[&str],
        flows: Option<&[&[f32]]>,
        steps: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f32>>> {
        let b = first_frames.len();
        if instructions.len() != b || flows.is_some_and(|f| f.len() != b) {
            return Err(Error::InvalidArgument("batch inputs differ in length".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("at least one sampling step is needed".into()));
        }
        let r = self.config().resolution;
        let vs = self.video_shape();
        let first = self.stack(first_frames.to_vec(), &[3, r, r])?;
        let flow = match (self.config().flow_slot, flows) {
            (true, Some(f)) => Some(self.stack(f.to_vec(), &vs)?),
            (true, None) => return Err(Error::InvalidArgument("flow-conditioned model needs a flow video".into())),
            (false, _) => None,
        };
        let tokens = self.tokens(instructions)?;
        let cond = VideoCond { first_frame: &first, text: &tokens, flow: flow.as_ref() };
        let mut rng = SplitMix64::new(seed);
        let n = b * vs.iter().product::<usize>();
        let mut shape = vec![b];
        shape.extend_from_slice(&vs);
        let mut x = Tensor::from_vec(rng.normals_f32(n), shape, &Device::Cpu)?.to_dtype(self.dtype())?;
        let idx = self.schedule.sampling_indices(steps);
        let mut x0 = x.clone();
        for (i, &k) in idx.iter().enumerate() {
            let eps = self.net.forward(&x, &vec![k; b], &cond)?;
            let a = self.schedule.alpha_bar(k);
            let a_prev = idx.get(i + 1).map_or(1.0, |&kp| self.schedule.alpha_bar(kp));
            let (next, est) = ddim_step(&x, &eps, a, a_prev)?;
            x = next;
            x0 = est;
        }
        let x0 = x0.to_dtype(DType::F32)?;
        let per = self.frame_len() * self.config().frames;
        let flat = x0.flatten_all()?.to_vec1::<f32>()?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampled video"));
        }
        Ok(flat.chunks(per).map(|c| c.to_vec()).collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let cfg = serde_json::to_string(self.config()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Checkpoint::capture(&self.kind, cfg, &self.schedule, self.vocab.words(), &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn from_checkpoint(kind: &str, ck: &Checkpoint) -> Result<Self> {
        let cfg: DenoiserConfig =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let model = Self::new(kind, cfg, Vocabulary::from_words(ck.vocab.clone()), ck.schedule.clone(), 0)?;
        ck.restore_into(kind, &model.params)?;
        Ok(model)
    }

    pub fn load(kind: &str, path: &Path) -> Result<Self> {
        Self::from_checkpoint(kind, &Checkpoint::load(path)?)
    }
}
