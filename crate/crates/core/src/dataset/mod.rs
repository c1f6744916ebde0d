//! Demonstrations and the clip preprocessing pipeline.
//!
//! Episodes come from the scripted experts or from teleoperation. The
//! pipeline cuts each episode into 17-frame clips (fixed start stride,
//! frame skipping by a down-sample interval), attaches the flow video
//! computed against the clip's first frame, and drops clips whose final flow
//! is too small.

mod clips;
mod expert;
mod flow;
mod io;

pub use clips::{
    attach_flow, clip_count, clip_episode, clip_starts, filter_low_motion, read_clip_index,
    write_clip_index, ClipIndexRecord, ClipSource, TrainingClip,
};
pub use expert::{run_expert, run_expert_with_states, MAX_EXPERT_STEPS};
pub use flow::{ground_truth_flow, replay_states, FlowEstimator, FlowSource};
pub use io::{load_episode, save_episode, ACTIONS_MAGIC, ACTIONS_VERSION, MANIFEST_FORMAT};

use serde::{Deserialize, Serialize};

use crate::flowcodec::CLIP_LEN;
use crate::image::Video;
use crate::sim2d::{Sim, TaskId};
use crate::{Error, Result};

/// Width of one action row: four joint targets then two gripper targets.
pub const ACTION_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub frames: Video,
    /// One row per transition, `frames.len() - 1` rows.
    pub actions: Vec<[f32; ACTION_DIM]>,
    pub instruction: String,
    pub task: TaskId,
    pub success: bool,
    pub seed: u64,
    /// Notes carried in the manifest, e.g. operator overrides.
    pub warnings: Vec<String>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument("episode has no frames".into()));
        }
        if self.actions.len() + 1 != self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "actions length {} must equal frames length {} - 1",
                self.actions.len(),
                self.frames.len()
            )));
        }
        let dims = self.frames[0].dims();
        if self.frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::InvalidArgument("frames differ in size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipSpec {
    pub sample_stride: usize,
    pub downsample_interval: usize,
    pub clip_len: usize,
    /// Pixels; clips whose final flow has a smaller mean magnitude are dropped.
    pub min_mean_flow: f64,
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self {
            sample_stride: 1,
            downsample_interval: 4,
            clip_len: CLIP_LEN,
            min_mean_flow: 0.05,
        }
    }
}

impl ClipSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_stride == 0 || self.downsample_interval == 0 || self.clip_len < 2 {
            return Err(Error::InvalidArgument(
                "sample_stride and downsample_interval must be >= 1, clip_len >= 2".into(),
            ));
        }
        if !(self.min_mean_flow >= 0.0) {
            return Err(Error::InvalidArgument("min_mean_flow must be >= 0".into()));
        }
        Ok(())
    }

    /// Number of source frames one clip spans.
    pub fn span(&self) -> usize {
        (self.clip_len - 1) * self.downsample_interval + 1
    }
}

/// Collects `count` expert episodes for `task` with seeds `first_seed..`.
pub fn collect(sim: &Sim, task: TaskId, first_seed: u64, count: usize) -> Vec<Episode> {
    (0..count as u64)
        .map(|i| run_expert(sim, task, first_seed + i))
        .collect()
}

/// Runs the full preprocessing pipeline on simulator episodes.
///
/// `episodes` pairs an id with each episode; ground-truth flow comes from
/// replaying the episode in `sim`.
pub fn build_clips(
    sim: &Sim,
    episodes: &[(String, Episode)],
    spec: &ClipSpec,
    f_max: f64,
) -> Result<Vec<TrainingClip>> {
    spec.validate()?;
    let mut out = Vec::new();
    for (id, ep) in episodes {
        let states = replay_states(sim, ep)?;
        for clip in clip_episode(id, ep, spec) {
            let clip = attach_flow(clip, &FlowSource::SimGroundTruth {
                config: sim.config(),
                states: &states,
            }, f_max)?;
            out.push(clip);
        }
    }
    Ok(filter_low_motion(out, spec.min_mean_flow))
}
