//! Deterministic 2D dual-arm simulator.
//!
//! Side view of a table (surface at `y = 0`) with two planar two-link arms
//! mounted mirrored at its edges. Physics is quasi-static: joints track their
//! targets under a per-tick rate limit, closed grippers near a handle attach
//! to the object, and attached objects move kinematically with the
//! end-effectors. Heavy objects (bag, box) only move when both grippers hold
//! them; unsupported objects rest on the table.

mod config;
pub mod kinematics;
mod render;
mod scene;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{SimConfig, Viewport};
pub use kinematics::{
    forward_kinematics, inverse_kinematics, unwrap_near, wrap_angle, ArmConfig, EePose,
    IkSolution,
};
pub use render::{part_frames, part_map, render, PartMap};
pub use scene::{Frame2, PartId};

use crate::image::Rgb8Image;
use crate::rng::SplitMix64;
use crate::{Error, Result};

pub type Observation = Rgb8Image;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    LiftBag,
    BlockHandover,
    PushBox,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::LiftBag, TaskId::BlockHandover, TaskId::PushBox];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::LiftBag => "lift_bag",
            TaskId::BlockHandover => "block_handover",
            TaskId::PushBox => "push_box",
        }
    }

    /// Fixed instruction sentence for the task.
    pub fn instruction(self) -> &'static str {
        match self {
            TaskId::LiftBag => {
                "the left arm grabs the left handle of the bag and the right arm grabs the \
                 right handle both arms lift the bag together"
            }
            TaskId::BlockHandover => {
                "the left arm picks up the block and hands it over to the right arm which \
                 carries it to the right side"
            }
            TaskId::PushBox => {
                "both arms grasp the two sides of the box and pull it together to bring the \
                 box to the left"
            }
        }
    }

    fn code(self) -> u64 {
        match self {
            TaskId::LiftBag => 1,
            TaskId::BlockHandover => 2,
            TaskId::PushBox => 3,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Bag,
    Box,
    Block,
}

impl ObjectKind {
    /// Heavy objects need both grippers to move.
    pub fn is_heavy(self) -> bool {
        !matches!(self, ObjectKind::Block)
    }

    /// Grasp points relative to the object position (bottom centre).
    pub fn grasp_points(self) -> &'static [[f64; 2]] {
        match self {
            ObjectKind::Bag => &[[-0.2, 0.4], [0.2, 0.4]],
            ObjectKind::Box => &[[-0.25, 0.15], [0.25, 0.15]],
            ObjectKind::Block => &[[0.0, 0.08]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    None,
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub kind: ObjectKind,
    pub position: [f64; 2],
    pub orientation: f64,
    /// Position at reset.
    pub origin: [f64; 2],
    /// Object position minus end-effector position, per gripper, while held.
    pub grip_offsets: [Option<[f64; 2]>; 2],
}

impl ObjectState {
    fn new(kind: ObjectKind, position: [f64; 2]) -> Self {
        Self {
            kind,
            position,
            orientation: 0.0,
            origin: position,
            grip_offsets: [None, None],
        }
    }

    pub fn attachment(&self) -> Attachment {
        match (self.grip_offsets[LEFT], self.grip_offsets[RIGHT]) {
            (None, None) => Attachment::None,
            (Some(_), None) => Attachment::Left,
            (None, Some(_)) => Attachment::Right,
            (Some(_), Some(_)) => Attachment::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// `[left θ1, left θ2, right θ1, right θ2]`, radians.
    pub joints: [f64; 4],
    /// Opening in `[0, 1]`, 1 = open.
    pub grippers: [f64; 2],
    pub objects: Vec<ObjectState>,
    pub task: TaskId,
    pub step_count: u64,
    pub rng_seed: u64,
    /// Consecutive ticks the lift condition has held.
    pub success_streak: u32,
    /// Set once the reward has fired; further steps are no-ops.
    pub done: bool,
}

impl SimState {
    pub fn arm_joints(&self, arm: usize) -> [f64; 2] {
        [self.joints[2 * arm], self.joints[2 * arm + 1]]
    }

    pub fn ee(&self, cfg: &SimConfig, arm: usize) -> EePose {
        forward_kinematics(cfg.arm(arm), self.arm_joints(arm))
    }

    /// Joints followed by grippers, the layout of one action row.
    pub fn proprio(&self) -> [f64; 6] {
        let j = self.joints;
        let g = self.grippers;
        [j[0], j[1], j[2], j[3], g[0], g[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub joint_targets: [f64; 4],
    pub gripper_targets: [f64; 2],
}

impl Action {
    /// The action that keeps the robot where it is.
    pub fn hold(state: &SimState) -> Self {
        Self {
            joint_targets: state.joints,
            gripper_targets: state.grippers,
        }
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self {
            joint_targets: [row[0], row[1], row[2], row[3]],
            gripper_targets: [row[4], row[5]],
        }
    }

    pub fn to_row(&self) -> [f64; 6] {
        let j = self.joint_targets;
        let g = self.gripper_targets;
        [j[0], j[1], j[2], j[3], g[0], g[1]]
    }

    /// Rounds every component through `f32`, the precision of stored
    /// episodes, so that recorded rollouts replay bit-exactly.
    pub fn quantized(&self) -> Self {
        let q = |x: f64| x as f32 as f64;
        Self {
            joint_targets: self.joint_targets.map(q),
            gripper_targets: self.gripper_targets.map(q),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_row().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: SimState,
    pub observation: Observation,
    pub reward: u8,
}

/// Simulator bound to one configuration.
#[derive(Debug, Clone)]
pub struct Sim {
    cfg: SimConfig,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Initial state for `task`, with object placement drawn from `seed`.
    pub fn reset(&self, task: TaskId, seed: u64) -> SimState {
        let mut rng = SplitMix64::derive(seed, &[task.code()]);
        let objects = match task {
            TaskId::LiftBag => vec![ObjectState::new(
                ObjectKind::Bag,
                [rng.uniform(-0.15, 0.15), 0.0],
            )],
            TaskId::BlockHandover => vec![ObjectState::new(
                ObjectKind::Block,
                [rng.uniform(-0.7, -0.4), 0.0],
            )],
            TaskId::PushBox => vec![ObjectState::new(
                ObjectKind::Box,
                [rng.uniform(0.1, 0.3), 0.0],
            )],
        };
        SimState {
            joints: self.cfg.home_joints,
            grippers: [1.0, 1.0],
            objects,
            task,
            step_count: 0,
            rng_seed: seed,
            success_streak: 0,
            done: false,
        }
    }

    pub fn reset_named(&self, task: &str, seed: u64) -> Result<SimState> {
        Ok(self.reset(task.parse()?, seed))
    }

    pub fn render(&self, state: &SimState) -> Observation {
        render(&self.cfg, state)
    }

    pub fn step(&self, state: &SimState, action: &Action) -> StepOutput {
        let (state, reward) = self.step_state(state, action);
        let observation = self.render(&state);
        StepOutput {
            state,
            observation,
            reward,
        }
    }

    /// [`step`](Self::step) without rendering.
    pub fn step_state(&self, state: &SimState, action: &Action) -> (SimState, u8) {
        let cfg = &self.cfg;
        let mut next = state.clone();
        next.step_count += 1;
        if state.done {
            return (next, 1);
        }

        for arm in 0..2 {
            let limits = cfg.arm(arm);
            let target = limits.clamp([
                finite_or(action.joint_targets[2 * arm], state.joints[2 * arm]),
                finite_or(action.joint_targets[2 * arm + 1], state.joints[2 * arm + 1]),
            ]);
            for j in 0..2 {
                let cur = state.joints[2 * arm + j];
                let delta = (target[j] - cur).clamp(-cfg.delta_step, cfg.delta_step);
                next.joints[2 * arm + j] = cur + delta;
            }
            let g_target = finite_or(action.gripper_targets[arm], state.grippers[arm]).clamp(0.0, 1.0);
            let g = state.grippers[arm];
            next.grippers[arm] = g + (g_target - g).clamp(-cfg.gripper_rate, cfg.gripper_rate);
        }

        let ee = [
            next.ee(cfg, LEFT).position,
            next.ee(cfg, RIGHT).position,
        ];
        update_attachments(cfg, &mut next.objects, &next.grippers, ee);
        move_objects(&mut next.objects, ee);

        let reward = self.evaluate(&mut next);
        if reward == 1 {
            next.done = true;
        }
        (next, reward)
    }

    fn evaluate(&self, s: &mut SimState) -> u8 {
        let cfg = &self.cfg;
        let obj = &s.objects[0];
        let achieved = match s.task {
            TaskId::LiftBag => {
                if obj.attachment() == Attachment::Both && obj.position[1] >= cfg.lift_threshold {
                    s.success_streak += 1;
                } else {
                    s.success_streak = 0;
                }
                s.success_streak >= cfg.lift_hold_steps
            }
            TaskId::BlockHandover => {
                obj.attachment() == Attachment::Right && obj.position[0] >= cfg.handover_x
            }
            TaskId::PushBox => {
                obj.attachment() == Attachment::None
                    && obj.position[1].abs() <= 1e-9
                    && obj.origin[0] - obj.position[0] >= cfg.push_displacement
            }
        };
        u8::from(achieved)
    }
}

fn finite_or(x: f64, fallback: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        fallback
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn update_attachments(
    cfg: &SimConfig,
    objects: &mut [ObjectState],
    grippers: &[f64; 2],
    ee: [[f64; 2]; 2],
) {
    for arm in 0..2 {
        let closed = grippers[arm] < cfg.grasp_threshold;
        if !closed {
            for o in objects.iter_mut() {
                o.grip_offsets[arm] = None;
            }
            continue;
        }
        if objects.iter().any(|o| o.grip_offsets[arm].is_some()) {
            continue;
        }
        let hit = objects.iter().position(|o| {
            o.kind.grasp_points().iter().any(|g| {
                let p = [o.position[0] + g[0], o.position[1] + g[1]];
                dist(p, ee[arm]) <= cfg.r_grasp
            })
        });
        if let Some(i) = hit {
            let o = &mut objects[i];
            o.grip_offsets[arm] = Some([o.position[0] - ee[arm][0], o.position[1] - ee[arm][1]]);
        }
    }
}

fn move_objects(objects: &mut [ObjectState], ee: [[f64; 2]; 2]) {
    for o in objects.iter_mut() {
        let held = |arm: usize, o: &ObjectState| {
            o.grip_offsets[arm].map(|off| [ee[arm][0] + off[0], ee[arm][1] + off[1]])
        };
        match (o.attachment(), o.kind.is_heavy()) {
            (Attachment::Both, _) => {
                let a = held(LEFT, o).unwrap();
                let b = held(RIGHT, o).unwrap();
                o.position = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
            }
            (Attachment::Left, false) => o.position = held(LEFT, o).unwrap(),
            (Attachment::Right, false) => o.position = held(RIGHT, o).unwrap(),
            (att, _) => {
                // Unsupported: rest on the table; a single gripper on a heavy
                // object slides along it.
                o.position[1] = 0.0;
                for arm in [LEFT, RIGHT] {
                    let holding = matches!(
                        (att, arm),
                        (Attachment::Left, LEFT) | (Attachment::Right, RIGHT)
                    );
                    if holding {
                        o.grip_offsets[arm] =
                            Some([o.position[0] - ee[arm][0], o.position[1] - ee[arm][1]]);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sim() -> Sim {
        Sim::new(SimConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_seed_dependent() {
        let s = sim();
        assert_eq!(s.reset(TaskId::LiftBag, 0), s.reset(TaskId::LiftBag, 0));
        assert_ne!(
            s.reset(TaskId::LiftBag, 0).objects,
            s.reset(TaskId::LiftBag, 1).objects
        );
    }

    #[test]
    fn unknown_task_is_an_error() {
        assert!(matches!(
            sim().reset_named("fold_towel", 0),
            Err(Error::UnknownTask(_))
        ));
        assert_eq!("push_box".parse::<TaskId>().unwrap(), TaskId::PushBox);
    }

    #[test]
    fn handover_block_is_reachable_by_left_arm() {
        let s = sim();
        let arm = s.config().left_arm;
        for seed in 0..50 {
            let st = s.reset(TaskId::BlockHandover, seed);
            let p = st.objects[0].position;
            let g = ObjectKind::Block.grasp_points()[0];
            let d = dist([p[0] + g[0], p[1] + g[1]], arm.base_position);
            assert!(d <= arm.link_lengths[0] + arm.link_lengths[1]);
        }
        let p = s.reset(TaskId::BlockHandover, 7).objects[0].position;
        assert!(dist(p, arm.base_position) <= 1.7);
    }

    #[test]
    fn hold_action_is_a_fixed_point() {
        let s = sim();
        for task in TaskId::ALL {
            let st = s.reset(task, 3);
            let out = s.step(&st, &Action::hold(&st));
            let mut expected = st.clone();
            expected.step_count = 1;
            assert_eq!(out.state, expected);
            assert_eq!(out.reward, 0);
        }
    }

    #[test]
    fn step_is_deterministic() {
        let s = sim();
        let st = s.reset(TaskId::PushBox, 5);
        let a = Action {
            joint_targets: [1.0, -1.0, 2.0, 1.0],
            gripper_targets: [0.0, 0.5],
        };
        let x = s.step(&st, &a);
        let y = s.step(&st, &a);
        assert_eq!(x.state, y.state);
        assert_eq!(x.observation, y.observation);
    }

    #[test]
    fn rate_limit_applies() {
        let s = sim();
        let st = s.reset(TaskId::LiftBag, 0);
        let mut a = Action::hold(&st);
        a.joint_targets[0] += 1.0;
        let out = s.step(&st, &a);
        assert!((out.state.joints[0] - st.joints[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn non_finite_targets_hold() {
        let s = sim();
        let st = s.reset(TaskId::LiftBag, 0);
        let a = Action {
            joint_targets: [f64::NAN; 4],
            gripper_targets: [f64::INFINITY, f64::NAN],
        };
        let out = s.step(&st, &a);
        assert_eq!(out.state.joints, st.joints);
        assert_eq!(out.state.grippers, st.grippers);
    }

    #[test]
    fn block_moves_rigidly_while_held() {
        let s = sim();
        let cfg = s.config().clone();
        let mut st = s.reset(TaskId::BlockHandover, 1);
        // Put the left end-effector exactly on the grasp point and close.
        let p = st.objects[0].position;
        let target = [p[0], p[1] + 0.08];
        let q = inverse_kinematics(&cfg.left_arm, target).joints().unwrap();
        st.joints[0] = q[0];
        st.joints[1] = q[1];
        st.grippers[LEFT] = 0.0;
        let mut a = Action::hold(&st);
        let st = s.step_state(&st, &a).0;
        assert_eq!(st.objects[0].attachment(), Attachment::Left);
        let off = st.objects[0].grip_offsets[LEFT].unwrap();
        a.joint_targets[0] += 0.05;
        a.joint_targets[1] -= 0.03;
        let next = s.step_state(&st, &a).0;
        let ee = next.ee(&cfg, LEFT).position;
        let pos = next.objects[0].position;
        assert!((pos[0] - ee[0] - off[0]).abs() < 1e-12);
        assert!((pos[1] - ee[1] - off[1]).abs() < 1e-12);
    }

    #[test]
    fn heavy_object_needs_both_grippers() {
        let s = sim();
        let cfg = s.config().clone();
        let mut st = s.reset(TaskId::LiftBag, 0);
        let bag = st.objects[0].position;
        let h = ObjectKind::Bag.grasp_points()[0];
        let q = inverse_kinematics(&cfg.left_arm, [bag[0] + h[0], bag[1] + h[1]])
            .joints()
            .unwrap();
        st.joints[0] = q[0];
        st.joints[1] = q[1];
        st.grippers[LEFT] = 0.0;
        let mut a = Action::hold(&st);
        let st = s.step_state(&st, &a).0;
        assert_eq!(st.objects[0].attachment(), Attachment::Left);
        a.joint_targets[0] += 0.1;
        let st2 = s.step_state(&st, &a).0;
        assert_eq!(st2.objects[0].position, bag);
    }

    proptest! {
        #[test]
        fn joints_never_leave_limits(
            targets in prop::array::uniform4(-10.0f64..10.0),
            grips in prop::array::uniform2(-2.0f64..2.0),
            steps in 1usize..40,
        ) {
            let s = sim();
            let mut st = s.reset(TaskId::LiftBag, 0);
            let a = Action { joint_targets: targets, gripper_targets: grips };
            for _ in 0..steps {
                st = s.step_state(&st, &a).0;
                for arm in 0..2 {
                    prop_assert!(s.config().arm(arm).within_limits(st.arm_joints(arm)));
                    prop_assert!((0.0..=1.0).contains(&st.grippers[arm]));
                }
            }
        }
    }
}
