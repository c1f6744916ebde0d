//! Closed-loop execution in the simulator.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::run_expert;
use crate::flow2video::{predict_pipeline_steps, VideoGenModel};
use crate::image::Rgb8Image;
use crate::policy::{execute_chunk, ActionChunk, GoalPolicy};
use crate::rng::SplitMix64;
use crate::sim2d::{Action, Sim, SimState, TaskId};
use crate::text2flow::FlowGenModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub max_steps: u64,
    /// Index of the predicted frame used as the goal.
    pub goal_index: usize,
    pub video_steps: usize,
    pub policy_steps: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { max_steps: 300, goal_index: 8, video_steps: 50, policy_steps: 50 }
    }
}

/// Where goal frames come from.
pub enum Controller<'a> {
    /// Text-to-flow then flow-to-video; the policy chases frame `goal_index`.
    Pipeline { fm: &'a FlowGenModel, vm: &'a VideoGenModel, policy: &'a GoalPolicy },
    /// Ground-truth expert frames replace the predicted video.
    Oracle { policy: &'a GoalPolicy },
    /// Goal-free diffusion policy baseline.
    GoalFree { policy: &'a GoalPolicy },
    /// Uniformly random joint and gripper targets.
    Random,
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Pipeline { .. } => "pipeline",
            Controller::Oracle { .. } => "oracle-goal",
            Controller::GoalFree { .. } => "goal-free",
            Controller::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub tick: u64,
    /// SHA-256 of the goal frame bytes, when a goal was used.
    pub goal_sha256: Option<String>,
    pub chunk: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub controller: String,
    pub task: TaskId,
    pub env_seed: u64,
    pub plans: Vec<PlanRecord>,
    /// Tick at which the reward fired.
    pub reward_step: Option<u64>,
    pub final_step: u64,
}

impl RolloutTrace {
    pub fn success(&self) -> bool {
        self.reward_step.is_some()
    }
}

fn frame_hash(img: &Rgb8Image) -> String {
    hex::encode(Sha256::digest(img.as_raw()))
}

fn random_chunk(sim: &Sim, rng: &mut SplitMix64, interval: usize) -> ActionChunk {
    let cfg = sim.config();
    let mut joints = [0.0; 4];
    for arm in 0..2 {
        let a = cfg.arm(arm);
        for j in 0..2 {
            let [lo, hi] = a.joint_limits[j];
            joints[2 * arm + j] = rng.uniform(lo, hi);
        }
    }
    let action = Action { joint_targets: joints, gripper_targets: [rng.next_f64(), rng.next_f64()] }.quantized();
    ActionChunk { actions: vec![action], execute: 1, interval }
}

/// Runs one episode: observe, plan a goal, act, execute the prefix, repeat
/// until the reward fires or `max_steps` ticks pass. Deterministic in
/// `(controller, task, env_seed)`.
pub fn rollout(sim: &Sim, controller: &Controller, task: TaskId, env_seed: u64, cfg: &RolloutConfig) -> Result<RolloutTrace> {
    let mut state: SimState = sim.reset(task, env_seed);
    let mut rng = SplitMix64::derive(env_seed, &[0x524f_4c4c]);
    let oracle_frames = match controller {
        Controller::Oracle { .. } => Some(run_expert(sim, task, env_seed).frames),
        _ => None,
    };
    let mut plans = Vec::new();
    let mut reward_step = None;
    let mut plan_idx = 0u64;
    while !state.done && state.step_count < cfg.max_steps && reward_step.is_none() {
        let obs = sim.render(&state);
        let plan_seed = SplitMix64::derive(env_seed, &[plan_idx]).next_u64();
        plan_idx += 1;
        let (goal, chunk) = match controller {
            Controller::Pipeline { fm, vm, policy } => {
                let (_, video) = predict_pipeline_steps(fm, vm, &obs, task.instruction(), plan_seed, cfg.video_steps)?;
                let g = video
                    .get(cfg.goal_index)
                    .ok_or_else(|| Error::InvalidArgument(format!("goal index {} outside video", cfg.goal_index)))?
                    .clone();
                let chunk = policy.act_steps(&obs, Some(&g), &state.proprio(), plan_seed, cfg.policy_steps)?;
                (Some(g), chunk)
            }
            Controller::Oracle { policy } => {
                let frames = oracle_frames.as_ref().expect("oracle frames");
                let t = state.step_count as usize + cfg.goal_index * policy.config().interval;
                let g = frames[t.min(frames.len() - 1)].clone();
                let chunk = policy.act_steps(&obs, Some(&g), &state.proprio(), plan_seed, cfg.policy_steps)?;
                (Some(g), chunk)
            }
            Controller::GoalFree { policy } => {
                (None, policy.act_steps(&obs, None, &state.proprio(), plan_seed, cfg.policy_steps)?)
            }
            Controller::Random => (None, random_chunk(sim, &mut rng, 4)),
        };
        plans.push(PlanRecord {
            tick: state.step_count,
            goal_sha256: goal.as_ref().map(frame_hash),
            chunk: chunk.actions.iter().map(Action::to_row).collect(),
        });
        let budget = (cfg.max_steps - state.step_count) as usize;
        let entries = chunk.execute.min(budget / chunk.interval.max(1));
        let outs = execute_chunk(sim, &state, &chunk, entries);
        for o in &outs {
            if o.reward == 1 && reward_step.is_none() {
                reward_step = Some(o.state.step_count);
            }
        }
        match outs.into_iter().last() {
            Some(last) => state = last.state,
            None => break,
        }
    }
    Ok(RolloutTrace {
        controller: controller.name().to_string(),
        task,
        env_seed,
        plans,
        reward_step,
        final_step: state.step_count,
    })
}

/// Environment seed of run `run` under evaluation seed `seed`.
pub fn env_seed(seed: u64, run: usize) -> u64 {
    SplitMix64::derive(seed, &[run as u64]).next_u64()
}
