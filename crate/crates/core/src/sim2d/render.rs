//! Rasteriser: point-samples each pixel centre against the scene parts.

use super::scene::{scene_parts, Frame2, PartId, BACKGROUND};
use super::{SimConfig, SimState};
use crate::image::Rgb8Image;

/// Per-pixel id of the topmost part, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PartMap {
    pub resolution: usize,
    pub ids: Vec<PartId>,
}

impl PartMap {
    pub fn get(&self, row: usize, col: usize) -> PartId {
        self.ids[row * self.resolution + col]
    }
}

pub fn render(cfg: &SimConfig, state: &SimState) -> Rgb8Image {
    let n = cfg.resolution;
    let parts = scene_parts(cfg, state);
    let mut img = Rgb8Image::filled(n, n, BACKGROUND);
    for row in 0..n {
        for col in 0..n {
            let p = cfg.pixel_center(row, col);
            if let Some(c) = parts.iter().rev().find_map(|part| part.hit(p)) {
                img.put(row, col, c);
            }
        }
    }
    img
}

/// Frame of every rigid part in `state`.
pub fn part_frames(cfg: &SimConfig, state: &SimState) -> Vec<(PartId, Frame2)> {
    scene_parts(cfg, state)
        .into_iter()
        .map(|p| (p.id, p.frame))
        .collect()
}

pub fn part_map(cfg: &SimConfig, state: &SimState) -> PartMap {
    let n = cfg.resolution;
    let parts = scene_parts(cfg, state);
    let mut ids = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let p = cfg.pixel_center(row, col);
            let id = parts
                .iter()
                .rev()
                .find(|part| part.hit(p).is_some())
                .map_or(PartId::Background, |part| part.id);
            ids.push(id);
        }
    }
    PartMap { resolution: n, ids }
}
