//! Ground-truth optical flow from simulator state.

use crate::flowcodec::FlowField;
use crate::image::Rgb8Image;
use crate::sim2d::{part_frames, part_map, Action, PartId, Sim, SimConfig, SimState};
use crate::{Error, Result};

use super::Episode;

/// Pluggable image-based flow estimator.
pub trait FlowEstimator {
    fn estimate(&self, from: &Rgb8Image, to: &Rgb8Image) -> Result<FlowField>;
}

pub enum FlowSource<'a> {
    /// Exact flow from the simulator states behind each episode frame.
    SimGroundTruth {
        config: &'a SimConfig,
        states: &'a [SimState],
    },
    Estimator(&'a dyn FlowEstimator),
}

/// Flow mapping every pixel of the `from` render to where the rigid part
/// under it sits in `to`. Table and background pixels have zero flow.
pub fn ground_truth_flow(cfg: &SimConfig, from: &SimState, to: &SimState) -> FlowField {
    let n = cfg.resolution;
    let ids = part_map(cfg, from);
    let f0 = part_frames(cfg, from);
    let f1 = part_frames(cfg, to);
    let px = cfg.pixel_size();
    let mut field = FlowField::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let id = ids.get(row, col);
            if matches!(id, PartId::Background | PartId::Table) {
                continue;
            }
            let (Some(a), Some(b)) = (
                f0.iter().find(|(i, _)| *i == id),
                f1.iter().find(|(i, _)| *i == id),
            ) else {
                continue;
            };
            if a.1 == b.1 {
                continue;
            }
            let p = cfg.pixel_center(row, col);
            let q = b.1.to_world(a.1.to_local(p));
            // Workspace y points up, image rows point down.
            field.set(row, col, [(q[0] - p[0]) / px, -(q[1] - p[1]) / px]);
        }
    }
    field
}

/// Re-simulates an episode from its seed and checks every frame matches.
pub fn replay_states(sim: &Sim, ep: &Episode) -> Result<Vec<SimState>> {
    ep.validate()?;
    let mut state = sim.reset(ep.task, ep.seed);
    let mut states = Vec::with_capacity(ep.frames.len());
    let mismatch = |i: usize| {
        Error::InvalidArgument(format!(
            "episode replay diverges at frame {i}; was it recorded with this simulator config?"
        ))
    };
    if sim.render(&state) != ep.frames[0] {
        return Err(mismatch(0));
    }
    states.push(state.clone());
    for (i, row) in ep.actions.iter().enumerate() {
        let action = Action::from_row(&row.map(f64::from));
        state = sim.step_state(&state, &action).0;
        if sim.render(&state) != ep.frames[i + 1] {
            return Err(mismatch(i + 1));
        }
        states.push(state.clone());
    }
    Ok(states)
}
