//! Scripted waypoint-following experts.
//!
//! Each task is a short list of phases; in a phase every arm drives its
//! commanded end-effector point toward a Cartesian target at a fixed speed,
//! converting the point to joint targets with analytic IK.

use super::Episode;
use crate::sim2d::{
    inverse_kinematics, unwrap_near, Action, ObjectKind, Sim, SimState, TaskId, LEFT, RIGHT,
};

/// Step cap for expert rollouts.
pub const MAX_EXPERT_STEPS: usize = 300;
/// Commanded end-effector speed, workspace units per tick.
const EE_SPEED: f64 = 0.02;
const OPEN: f64 = 1.0;
const CLOSED: f64 = 0.0;

#[derive(Debug, Clone, Copy)]
struct Phase {
    /// `None` keeps the arm's current command point.
    targets: [Option<[f64; 2]>; 2],
    grippers: [f64; 2],
    /// Extra ticks to wait after both targets are reached.
    settle: u32,
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn plan(state: &SimState) -> Vec<Phase> {
    let obj = &state.objects[0];
    let p = obj.position;
    let phase = |l: Option<[f64; 2]>, r: Option<[f64; 2]>, g: [f64; 2], settle| Phase {
        targets: [l, r],
        grippers: g,
        settle,
    };
    match state.task {
        TaskId::LiftBag => {
            let hp = ObjectKind::Bag.grasp_points();
            let (hl, hr) = (add(p, hp[0]), add(p, hp[1]));
            let up = |h, dy| add(h, [0.0, dy]);
            vec![
                phase(Some(up(hl, 0.2)), Some(up(hr, 0.2)), [OPEN, OPEN], 0),
                phase(Some(hl), Some(hr), [OPEN, OPEN], 0),
                phase(Some(hl), Some(hr), [CLOSED, CLOSED], 5),
                phase(Some(up(hl, 0.75)), Some(up(hr, 0.75)), [CLOSED, CLOSED], 40),
            ]
        }
        TaskId::BlockHandover => {
            let g = add(p, ObjectKind::Block.grasp_points()[0]);
            let handover = [-0.05, 0.8];
            vec![
                phase(Some(add(g, [0.0, 0.25])), None, [OPEN, OPEN], 0),
                phase(Some(g), None, [OPEN, OPEN], 0),
                phase(Some(g), None, [CLOSED, OPEN], 5),
                phase(Some(handover), Some([0.35, 0.95]), [CLOSED, OPEN], 0),
                phase(None, Some(add(handover, [0.1, 0.0])), [CLOSED, OPEN], 0),
                phase(None, None, [CLOSED, CLOSED], 5),
                phase(None, None, [OPEN, CLOSED], 5),
                phase(Some([-0.5, 1.0]), Some([0.55, 0.6]), [OPEN, CLOSED], 40),
            ]
        }
        TaskId::PushBox => {
            let hp = ObjectKind::Box.grasp_points();
            let (hl, hr) = (add(p, hp[0]), add(p, hp[1]));
            let shift = [-0.5, 0.0];
            vec![
                phase(Some(add(hl, [0.0, 0.25])), Some(add(hr, [0.0, 0.25])), [OPEN, OPEN], 0),
                phase(Some(hl), Some(hr), [OPEN, OPEN], 0),
                phase(Some(hl), Some(hr), [CLOSED, CLOSED], 5),
                phase(Some(add(hl, shift)), Some(add(hr, shift)), [CLOSED, CLOSED], 0),
                phase(None, None, [OPEN, OPEN], 40),
            ]
        }
    }
}

/// Rollout of the scripted expert, returning the recorded episode and the
/// simulator state behind every frame.
pub fn run_expert_with_states(sim: &Sim, task: TaskId, seed: u64) -> (Episode, Vec<SimState>) {
    let cfg = sim.config();
    let mut state = sim.reset(task, seed);
    let mut states = vec![state.clone()];
    let mut frames = vec![sim.render(&state)];
    let mut actions = Vec::new();
    let mut success = false;

    let phases = plan(&state);
    let mut cmd = [state.ee(cfg, LEFT).position, state.ee(cfg, RIGHT).position];
    let mut phase_idx = 0;
    let mut settled = 0u32;

    'outer: while actions.len() < MAX_EXPERT_STEPS && phase_idx < phases.len() {
        let ph = phases[phase_idx];
        let mut reached = true;
        for arm in [LEFT, RIGHT] {
            if let Some(t) = ph.targets[arm] {
                let dx = t[0] - cmd[arm][0];
                let dy = t[1] - cmd[arm][1];
                let d = dx.hypot(dy);
                if d <= EE_SPEED {
                    cmd[arm] = t;
                } else {
                    cmd[arm] = [cmd[arm][0] + dx / d * EE_SPEED, cmd[arm][1] + dy / d * EE_SPEED];
                    reached = false;
                }
            }
        }
        let mut joint_targets = state.joints;
        for arm in [LEFT, RIGHT] {
            let a = cfg.arm(arm);
            // Unreachable waypoint: stop, recorded as a failure.
            let Some(q) = inverse_kinematics(a, cmd[arm]).joints() else {
                break 'outer;
            };
            let q = unwrap_near(q, state.arm_joints(arm));
            if !a.within_limits(q) {
                break 'outer;
            }
            joint_targets[2 * arm] = q[0];
            joint_targets[2 * arm + 1] = q[1];
        }
        let grippers_done = (0..2).all(|i| (state.grippers[i] - ph.grippers[i]).abs() < 1e-12);
        let action = Action {
            joint_targets,
            gripper_targets: ph.grippers,
        }
        .quantized();
        let (next, reward) = sim.step_state(&state, &action);
        actions.push(action);
        frames.push(sim.render(&next));
        states.push(next.clone());
        state = next;
        if reward == 1 {
            success = true;
            break;
        }
        if reached && grippers_done {
            settled += 1;
            if settled > ph.settle {
                phase_idx += 1;
                settled = 0;
            }
        }
    }

    let episode = Episode {
        frames,
        actions: actions.iter().map(|a| a.to_row().map(|x| x as f32)).collect(),
        instruction: task.instruction().to_string(),
        task,
        success,
        seed,
        warnings: Vec::new(),
    };
    (episode, states)
}

pub fn run_expert(sim: &Sim, task: TaskId, seed: u64) -> Episode {
    run_expert_with_states(sim, task, seed).0
}
