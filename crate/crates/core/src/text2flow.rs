//! Stage 1: generate a color-wheel flow video from the initial observation
//! and an instruction.

use std::path::Path;

use crate::dataset::TrainingClip;
use crate::diffusion::denoiser::{frame_to_vec, vec_to_video, video_to_vec};
use crate::diffusion::schedule::{DEFAULT_SAMPLE_STEPS, DEFAULT_TRAIN_STEPS};
use crate::diffusion::text::DEFAULT_MAX_TOKENS;
use crate::diffusion::{
    train_loop, DenoiserConfig, NoiseSchedule, TrainConfig, VideoDiffusion, VideoExample, Vocabulary,
};
use crate::flowcodec::CLIP_LEN;
use crate::image::{Rgb8Image, Video};
use crate::{Error, Result};

pub const KIND: &str = "text2flow";

pub fn default_config(resolution: usize) -> DenoiserConfig {
    DenoiserConfig {
        frames: CLIP_LEN,
        resolution,
        patch: if resolution >= 32 { 8 } else { 4 },
        width: 64,
        depth: 2,
        heads: 4,
        max_tokens: DEFAULT_MAX_TOKENS,
        vocab_size: 0,
        flow_slot: false,
    }
}

pub struct FlowGenModel {
    inner: VideoDiffusion,
}

impl FlowGenModel {
    /// Untrained model; the flow slot is always disabled.
    pub fn new(mut cfg: DenoiserConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        cfg.flow_slot = false;
        Ok(Self { inner: VideoDiffusion::new(KIND, cfg, vocab, NoiseSchedule::cosine(DEFAULT_TRAIN_STEPS), seed)? })
    }

    pub fn from_inner(inner: VideoDiffusion) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &VideoDiffusion {
        &self.inner
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.inner.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self { inner: VideoDiffusion::load(KIND, path)? })
    }
}

/// Training example whose target is the clip's flow video.
pub fn flow_example(clip: &TrainingClip) -> Result<VideoExample> {
    let flow = clip
        .flow_video
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("clip {:?} has no flow video", clip.source)))?;
    Ok(VideoExample {
        first_frame: frame_to_vec(&clip.initial_frame),
        target: video_to_vec(flow),
        flow: None,
        instruction: clip.instruction.clone(),
    })
}

/// Minibatch indices for one step: a seeded draw with replacement, or the
/// whole set when it fits in one batch.
pub(crate) fn batch_indices(n: usize, batch: usize, rng: &mut crate::rng::SplitMix64) -> Vec<usize> {
    if n <= batch {
        (0..n).collect()
    } else {
        (0..batch).map(|_| rng.below(n)).collect()
    }
}

pub fn train_on_examples(model: &FlowGenModel, examples: &[VideoExample], cfg: &TrainConfig) -> Result<Vec<f32>> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("no flow training clips".into()));
    }
    train_loop(model.inner.params(), cfg, |_, rng| {
        let idx = batch_indices(examples.len(), cfg.batch_size, rng);
        let batch: Vec<&VideoExample> = idx.iter().map(|&i| &examples[i]).collect();
        model.inner.loss(&batch, rng)
    })
}

/// Optimizes the ε objective on clip flow videos. Returns the loss history.
pub fn train_flow(model: &FlowGenModel, clips: &[TrainingClip], cfg: &TrainConfig) -> Result<Vec<f32>> {
    let examples = clips.iter().map(flow_example).collect::<Result<Vec<_>>>()?;
    train_on_examples(model, &examples, cfg)
}

pub fn generate_flow_steps(
    model: &FlowGenModel,
    o0: &Rgb8Image,
    instruction: &str,
    seed: u64,
    steps: usize,
) -> Result<Video> {
    let cfg = model.inner.config();
    let r = cfg.resolution;
    if o0.dims() != (r, r) {
        return Err(Error::shape(format!("{r}x{r}"), format!("{:?}", o0.dims())));
    }
    let first = frame_to_vec(o0);
    let out = model.inner.sample(&[&first], &[instruction], None, steps, seed)?;
    vec_to_video(&out[0], cfg.frames, r, r)
}

/// Samples a 17-frame flow video with the default 50-step sampler.
pub fn generate_flow(model: &FlowGenModel, o0: &Rgb8Image, instruction: &str, seed: u64) -> Result<Video> {
    generate_flow_steps(model, o0, instruction, seed, DEFAULT_SAMPLE_STEPS)
}
