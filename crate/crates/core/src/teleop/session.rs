//! One teleoperation session: retargeting, the IK execution guard and
//! demonstration recording.

use std::path::{Path, PathBuf};

use crate::dataset::{save_episode, Episode};
use crate::image::Rgb8Image;
use crate::sim2d::{inverse_kinematics, unwrap_near, Action, Sim, SimState, StepOutput, TaskId};
use crate::{Error, Result};

use super::retarget::{retarget, HandPose, RetargetConfig};

/// Result of one control tick.
#[derive(Debug, Clone)]
pub struct TickOutcome {
    pub action: Action,
    /// Arms whose joint command was held by the guard this tick.
    pub held: [bool; 2],
    pub output: StepOutput,
}

struct Recording {
    frames: Vec<Rgb8Image>,
    actions: Vec<[f32; 6]>,
    rewarded: bool,
}

pub struct TeleopSession {
    sim: Sim,
    cfg: RetargetConfig,
    task: TaskId,
    seed: u64,
    state: SimState,
    command: Action,
    last_reward: u8,
    recording: Option<Recording>,
}

/// Proposes joints for one arm from a pose, or `None` if the guard holds.
///
/// The IK solution is unwrapped next to the previous command, rounded to the
/// recorded f32 precision, and accepted
/// only if it exists, respects the joint limits and moves no joint by more
/// than `delta_max`.
pub fn guard_arm(sim: &Sim, cfg: &RetargetConfig, arm: usize, previous: [f64; 2], pose: &HandPose) -> Option<[f64; 2]> {
    let target = retarget(pose, cfg)?;
    let arm_cfg = sim.config().arm(arm);
    let joints = unwrap_near(inverse_kinematics(arm_cfg, target.position).joints()?, previous)
        .map(|v| v as f32 as f64);
    let ok = arm_cfg.within_limits(joints)
        && joints.iter().zip(previous).all(|(a, b)| (a - b).abs() <= cfg.delta_max);
    ok.then_some(joints)
}

impl TeleopSession {
    pub fn new(sim: Sim, cfg: RetargetConfig, task: TaskId, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = sim.reset(task, seed);
        let command = Action::hold(&state);
        Ok(Self { sim, cfg, task, seed, state, command, last_reward: 0, recording: None })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn last_reward(&self) -> u8 {
        self.last_reward
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    pub fn observation(&self) -> Rgb8Image {
        self.sim.render(&self.state)
    }

    /// Restarts the simulator; any recording in progress is discarded.
    pub fn reset(&mut self, task: TaskId, seed: u64) {
        if self.recording.take().is_some() {
            log::warn!("reset discarded an unfinished recording");
        }
        self.task = task;
        self.seed = seed;
        self.state = self.sim.reset(task, seed);
        self.command = Action::hold(&self.state);
        self.last_reward = 0;
    }

    /// Applies the latest pose of each hand (if any) and advances the
    /// simulator by one tick. Grippers follow the pinch whenever a pose is
    /// present; joints only when the guard accepts.
    pub fn control_tick(&mut self, poses: [Option<&HandPose>; 2]) -> TickOutcome {
        let mut cmd = self.command;
        let mut held = [false; 2];
        for arm in 0..2 {
            let Some(pose) = poses[arm] else { continue };
            let prev = [cmd.joint_targets[2 * arm], cmd.joint_targets[2 * arm + 1]];
            match guard_arm(&self.sim, &self.cfg, arm, prev, pose) {
                Some(j) => {
                    cmd.joint_targets[2 * arm] = j[0];
                    cmd.joint_targets[2 * arm + 1] = j[1];
                }
                None => held[arm] = true,
            }
            if let Some(t) = retarget(pose, &self.cfg) {
                cmd.gripper_targets[arm] = t.grip;
            }
        }
        let action = cmd.quantized();
        self.command = action;
        let output = self.sim.step(&self.state, &action);
        self.state = output.state.clone();
        self.last_reward = output.reward;
        if let Some(rec) = &mut self.recording {
            let row = action.to_row();
            rec.actions.push(row.map(|v| v as f32));
            rec.frames.push(output.observation.clone());
            rec.rewarded |= output.reward == 1;
        }
        TickOutcome { action, held, output }
    }

    /// Starts recording. The scene is reset to the session's task and seed
    /// so that the episode can be replayed from its seed.
    pub fn start_recording(&mut self) -> Result<()> {
        if self.recording.is_some() {
            return Err(Error::Session("already recording".into()));
        }
        self.reset(self.task, self.seed);
        self.recording = Some(Recording { frames: vec![self.observation()], actions: Vec::new(), rewarded: false });
        Ok(())
    }

    /// Stops recording and returns the episode with the operator's success
    /// flag. A declared success that the reward never confirmed is kept but
    /// noted in `warnings`.
    pub fn stop_recording(&mut self, success: bool) -> Result<Episode> {
        let rec = self.recording.take().ok_or_else(|| Error::Session("stop without start".into()))?;
        if rec.actions.is_empty() {
            return Err(Error::Session("recording has no ticks".into()));
        }
        let mut warnings = Vec::new();
        if success && !rec.rewarded {
            warnings.push("declared success but the task reward never fired".to_string());
        }
        let ep = Episode {
            frames: rec.frames,
            actions: rec.actions,
            instruction: self.task.instruction().to_string(),
            task: self.task,
            success,
            seed: self.seed,
            warnings,
        };
        ep.validate()?;
        Ok(ep)
    }

    /// Stops recording and saves the episode under `root` in a fresh
    /// numbered directory.
    pub fn stop_and_save(&mut self, success: bool, root: &Path) -> Result<(Episode, PathBuf)> {
        let ep = self.stop_recording(success)?;
        std::fs::create_dir_all(root)?;
        let mut i = 0usize;
        let dir = loop {
            let d = root.join(format!("{}_{:04}", self.task.as_str(), i));
            if !d.exists() {
                break d;
            }
            i += 1;
        };
        save_episode(&ep, &dir)?;
        Ok((ep, dir))
    }
}
