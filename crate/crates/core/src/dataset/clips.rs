use std::fmt::Write as _;
use std::path::Path;

use super::flow::{ground_truth_flow, FlowSource};
use super::{ClipSpec, Episode};
use crate::flowcodec::{self, FlowField, FLOW_FRAMES};
use crate::image::{Rgb8Image, Video};
use crate::sim2d::TaskId;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClipSource {
    pub episode_id: String,
    pub start: usize,
    pub interval: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingClip {
    pub initial_frame: Rgb8Image,
    pub instruction: String,
    pub task: TaskId,
    /// `clip_len` frames; frame 0 is `initial_frame`.
    pub video: Video,
    /// Filled by [`attach_flow`]: white frame then 16 encoded flows.
    pub flow_video: Option<Video>,
    pub source: ClipSource,
    pub f_max: f64,
    /// Mean magnitude (pixels) of the flow from frame 0 to the last frame.
    pub final_mean_flow: Option<f64>,
}

impl TrainingClip {
    pub fn check_invariants(&self) -> Result<()> {
        if self.video.len() != flowcodec::CLIP_LEN {
            return Err(Error::InvalidArgument(format!(
                "clip has {} frames, expected {}",
                self.video.len(),
                flowcodec::CLIP_LEN
            )));
        }
        if self.video[0] != self.initial_frame {
            return Err(Error::InvalidArgument("video[0] != initial_frame".into()));
        }
        if let Some(fv) = &self.flow_video {
            if fv.len() != flowcodec::CLIP_LEN || !fv[0].is_all([255; 3]) {
                return Err(Error::InvalidArgument(
                    "flow video must have 17 frames with a white frame 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Closed-form number of clips for an episode of `t` frames.
pub fn clip_count(t: usize, spec: &ClipSpec) -> usize {
    let needed = (spec.clip_len - 1) * spec.downsample_interval;
    if t == 0 || t - 1 < needed {
        return 0;
    }
    (t - 1 - needed) / spec.sample_stride + 1
}

pub fn clip_starts(t: usize, spec: &ClipSpec) -> Vec<usize> {
    (0..clip_count(t, spec))
        .map(|i| i * spec.sample_stride)
        .collect()
}

/// Cuts an episode into clips; `flow_video` is left empty.
pub fn clip_episode(episode_id: &str, ep: &Episode, spec: &ClipSpec) -> Vec<TrainingClip> {
    let d = spec.downsample_interval;
    clip_starts(ep.frames.len(), spec)
        .into_iter()
        .map(|s| {
            let video: Video = (0..spec.clip_len).map(|i| ep.frames[s + i * d].clone()).collect();
            TrainingClip {
                initial_frame: video[0].clone(),
                instruction: ep.instruction.clone(),
                task: ep.task,
                video,
                flow_video: None,
                source: ClipSource {
                    episode_id: episode_id.to_string(),
                    start: s,
                    interval: d,
                },
                f_max: 0.0,
                final_mean_flow: None,
            }
        })
        .collect()
}

/// Computes `f_{0→i}` for `i = 1..16`, encodes it and prepends the white
/// frame.
pub fn attach_flow(mut clip: TrainingClip, source: &FlowSource<'_>, f_max: f64) -> Result<TrainingClip> {
    if clip.video.len() != FLOW_FRAMES + 1 {
        return Err(Error::InvalidArgument(format!(
            "attach_flow needs {} frames, clip has {}",
            FLOW_FRAMES + 1,
            clip.video.len()
        )));
    }
    let fields: Vec<FlowField> = match source {
        FlowSource::SimGroundTruth { config, states } => {
            let s = clip.source.start;
            let d = clip.source.interval;
            let last = s + FLOW_FRAMES * d;
            if last >= states.len() {
                return Err(Error::InvalidArgument(format!(
                    "clip needs state {last}, episode has {}",
                    states.len()
                )));
            }
            (1..=FLOW_FRAMES)
                .map(|i| ground_truth_flow(config, &states[s], &states[s + i * d]))
                .collect()
        }
        FlowSource::Estimator(est) => (1..=FLOW_FRAMES)
            .map(|i| est.estimate(&clip.video[0], &clip.video[i]))
            .collect::<Result<_>>()?,
    };
    let final_mean = fields[FLOW_FRAMES - 1].mean_magnitude();
    let seq = flowcodec::FlowSequence::new(fields, f_max)?;
    let frames = flowcodec::encode(&seq)?;
    clip.flow_video = Some(flowcodec::assemble_flow_video(frames)?);
    clip.f_max = f_max;
    clip.final_mean_flow = Some(final_mean);
    Ok(clip)
}

fn final_flow_mean(clip: &TrainingClip) -> f64 {
    if let Some(m) = clip.final_mean_flow {
        return m;
    }
    match &clip.flow_video {
        Some(fv) => flowcodec::decode_frame(&fv[fv.len() - 1], clip.f_max)
            .0
            .mean_magnitude(),
        None => 0.0,
    }
}

/// Keeps clips whose final flow has mean magnitude `>= min_mean_flow`.
pub fn filter_low_motion(clips: Vec<TrainingClip>, min_mean_flow: f64) -> Vec<TrainingClip> {
    clips
        .into_iter()
        .filter(|c| final_flow_mean(c) >= min_mean_flow)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipIndexRecord {
    pub source: ClipSource,
    pub f_max: f64,
}

const INDEX_HEADER: &str = "# cogdesk clip index v1\n# episode_id start interval f_max\n";

/// Writes one whitespace-separated record per clip.
pub fn write_clip_index(path: impl AsRef<Path>, clips: &[TrainingClip]) -> Result<()> {
    let mut s = String::from(INDEX_HEADER);
    for c in clips {
        if c.source.episode_id.split_whitespace().count() != 1 {
            return Err(Error::InvalidArgument(format!(
                "episode id `{}` must be a single token",
                c.source.episode_id
            )));
        }
        writeln!(
            s,
            "{} {} {} {}",
            c.source.episode_id, c.source.start, c.source.interval, c.f_max
        )
        .unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_clip_index(path: impl AsRef<Path>) -> Result<Vec<ClipIndexRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::InvalidArgument(format!("clip index line {}: `{line}`", i + 1));
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        out.push(ClipIndexRecord {
            source: ClipSource {
                episode_id: parts[0].to_string(),
                start: parts[1].parse().map_err(|_| bad())?,
                interval: parts[2].parse().map_err(|_| bad())?,
            },
            f_max: parts[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
