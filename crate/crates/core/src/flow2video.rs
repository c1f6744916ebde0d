//! Stage 2: predict the RGB trajectory with the flow video concatenated to
//! the network input along the channel axis.

use std::path::Path;

use crate::dataset::TrainingClip;
use crate::diffusion::denoiser::{frame_to_vec, vec_to_video, video_to_vec};
use crate::diffusion::schedule::{DEFAULT_SAMPLE_STEPS, DEFAULT_TRAIN_STEPS};
use crate::diffusion::{train_loop, DenoiserConfig, NoiseSchedule, TrainConfig, VideoDiffusion, VideoExample, Vocabulary};
use crate::flowcodec::CLIP_LEN;
use crate::image::{Rgb8Image, Video};
use crate::text2flow::{batch_indices, generate_flow, FlowGenModel};
use crate::{Error, Result};

pub const KIND: &str = "flow2video";
/// Same network trained without the flow input, for the ablation.
pub const KIND_TEXT_ONLY: &str = "flow2video-text-only";

pub fn default_config(resolution: usize) -> DenoiserConfig {
    DenoiserConfig { flow_slot: true, ..crate::text2flow::default_config(resolution) }
}

pub struct VideoGenModel {
    inner: VideoDiffusion,
}

impl VideoGenModel {
    pub fn new(mut cfg: DenoiserConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        cfg.flow_slot = true;
        Ok(Self { inner: VideoDiffusion::new(KIND, cfg, vocab, NoiseSchedule::cosine(DEFAULT_TRAIN_STEPS), seed)? })
    }

    /// The ablation variant: identical except that no flow is consumed.
    pub fn text_only(mut cfg: DenoiserConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        cfg.flow_slot = false;
        Ok(Self {
            inner: VideoDiffusion::new(KIND_TEXT_ONLY, cfg, vocab, NoiseSchedule::cosine(DEFAULT_TRAIN_STEPS), seed)?,
        })
    }

    pub fn uses_flow(&self) -> bool {
        self.inner.config().flow_slot
    }

    pub fn inner(&self) -> &VideoDiffusion {
        &self.inner
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.inner.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = crate::diffusion::Checkpoint::load(path)?;
        let kind = ck.kind.clone();
        if kind != KIND && kind != KIND_TEXT_ONLY {
            return Err(Error::Checkpoint(format!("expected a {KIND} checkpoint, found {kind}")));
        }
        Ok(Self { inner: VideoDiffusion::from_checkpoint(&kind, &ck)? })
    }
}

/// Training example: RGB clip target, ground-truth flow as conditioning.
pub fn video_example(clip: &TrainingClip, with_flow: bool) -> Result<VideoExample> {
    let flow = if with_flow {
        let f = clip
            .flow_video
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("clip {:?} has no flow video", clip.source)))?;
        Some(video_to_vec(f))
    } else {
        None
    };
    Ok(VideoExample {
        first_frame: frame_to_vec(&clip.initial_frame),
        target: video_to_vec(&clip.video),
        flow,
        instruction: clip.instruction.clone(),
    })
}

pub fn train_on_examples(model: &VideoGenModel, examples: &[VideoExample], cfg: &TrainConfig) -> Result<Vec<f32>> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("no video training clips".into()));
    }
    train_loop(model.inner.params(), cfg, |_, rng| {
        let idx = batch_indices(examples.len(), cfg.batch_size, rng);
        let batch: Vec<&VideoExample> = idx.iter().map(|&i| &examples[i]).collect();
        model.inner.loss(&batch, rng)
    })
}

pub fn train_video(model: &VideoGenModel, clips: &[TrainingClip], cfg: &TrainConfig) -> Result<Vec<f32>> {
    let examples = clips
        .iter()
        .map(|c| video_example(c, model.uses_flow()))
        .collect::<Result<Vec<_>>>()?;
    train_on_examples(model, &examples, cfg)
}

pub fn predict_video_steps(
    model: &VideoGenModel,
    o0: &Rgb8Image,
    instruction: &str,
    flow_video: Option<&[Rgb8Image]>,
    seed: u64,
    steps: usize,
) -> Result<Video> {
    let cfg = model.inner.config();
    let r = cfg.resolution;
    if o0.dims() != (r, r) {
        return Err(Error::shape(format!("{r}x{r}"), format!("{:?}", o0.dims())));
    }
    let flow = match (model.uses_flow(), flow_video) {
        (true, Some(f)) => {
            if f.len() != CLIP_LEN {
                return Err(Error::shape(CLIP_LEN, f.len()));
            }
            Some(video_to_vec(f))
        }
        (true, None) => return Err(Error::InvalidArgument("flow video required".into())),
        (false, _) => None,
    };
    let first = frame_to_vec(o0);
    let flows: Option<Vec<&[f32]>> = flow.as_ref().map(|f| vec![f.as_slice()]);
    let out = model.inner.sample(&[&first], &[instruction], flows.as_deref(), steps, seed)?;
    vec_to_video(&out[0], cfg.frames, r, r)
}

/// Samples the RGB trajectory. The flow video must have 17 frames; the
/// text-only variant ignores it.
pub fn predict_video(
    model: &VideoGenModel,
    o0: &Rgb8Image,
    instruction: &str,
    flow_video: &[Rgb8Image],
    seed: u64,
) -> Result<Video> {
    predict_video_steps(model, o0, instruction, Some(flow_video), seed, DEFAULT_SAMPLE_STEPS)
}

/// Runs both stages; the returned flow video is exactly the one fed to
/// stage 2.
pub fn predict_pipeline(
    fm: &FlowGenModel,
    vm: &VideoGenModel,
    o0: &Rgb8Image,
    instruction: &str,
    seed: u64,
) -> Result<(Video, Video)> {
    let flow = generate_flow(fm, o0, instruction, seed)?;
    let video = predict_video(vm, o0, instruction, &flow, seed.wrapping_add(1))?;
    Ok((flow, video))
}

/// Same composition with an explicit number of sampling steps.
pub fn predict_pipeline_steps(
    fm: &FlowGenModel,
    vm: &VideoGenModel,
    o0: &Rgb8Image,
    instruction: &str,
    seed: u64,
    steps: usize,
) -> Result<(Video, Video)> {
    let flow = crate::text2flow::generate_flow_steps(fm, o0, instruction, seed, steps)?;
    let video = predict_video_steps(vm, o0, instruction, Some(&flow), seed.wrapping_add(1), steps)?;
    Ok((flow, video))
}
