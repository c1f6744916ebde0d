//! Device-to-workspace retargeting: `T_arm = T1 · T_hand · T2`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

/// A hand sample in client device coordinates (pixels, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub t: i64,
    pub hand: Hand,
    pub position: [f64; 2],
    pub orientation: f64,
    pub pinch: f64,
}

impl HandPose {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.orientation.is_finite() && self.pinch.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetargetConfig {
    /// Row-major device→workspace transform.
    pub t1: [[f64; 3]; 3],
    /// Row-major offset applied in the end-effector frame.
    pub t2: [[f64; 3]; 3],
    pub pinch_max: f64,
    /// Largest accepted joint change per tick (rad).
    pub delta_max: f64,
}

impl Default for RetargetConfig {
    /// A 640×640 canvas covering the simulator viewport: 0.005 m per pixel,
    /// y pointing up, pixel (0, 0) at workspace (−1.6, 2.8).
    fn default() -> Self {
        Self {
            t1: [[0.005, 0.0, -1.6], [0.0, -0.005, 2.8], [0.0, 0.0, 1.0]],
            t2: IDENTITY,
            pinch_max: 1.0,
            delta_max: 0.15,
        }
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

impl RetargetConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("t1", &self.t1), ("t2", &self.t2)] {
            let det = to_matrix(m).determinant();
            if !det.is_finite() || det.abs() < 1e-12 {
                return Err(Error::Config(format!("{name} must be invertible")));
            }
        }
        if !(self.pinch_max > 0.0 && self.pinch_max.is_finite()) {
            return Err(Error::Config("pinch_max must be positive".into()));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::Config("delta_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetargetTarget {
    pub position: [f64; 2],
    pub orientation: f64,
    pub grip: f64,
}

/// Homogeneous planar pose.
pub fn pose_matrix(position: [f64; 2], angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, position[0], s, c, position[1], 0.0, 0.0, 1.0)
}

/// Maps a hand pose to an end-effector target. Non-finite poses yield
/// `None` and are dropped by the caller.
pub fn retarget(pose: &HandPose, cfg: &RetargetConfig) -> Option<RetargetTarget> {
    if !pose.is_finite() {
        return None;
    }
    let arm = to_matrix(&cfg.t1) * pose_matrix(pose.position, pose.orientation) * to_matrix(&cfg.t2);
    let target = RetargetTarget {
        position: [arm[(0, 2)], arm[(1, 2)]],
        orientation: arm[(1, 0)].atan2(arm[(0, 0)]),
        grip: (pose.pinch / cfg.pinch_max).clamp(0.0, 1.0),
    };
    (target.position.iter().all(|v| v.is_finite()) && target.orientation.is_finite()).then_some(target)
}
