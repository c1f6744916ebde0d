//! Simulator configuration.
//!
//! Stored as TOML. Every key is optional; missing keys take the defaults
//! below.
//!
//! ```toml
//! resolution = 64          # square frame size in pixels
//! delta_step = 0.1         # joint rate limit, rad/tick
//! gripper_rate = 0.25      # gripper opening rate limit, 1/tick
//! r_grasp = 0.15           # grasp radius, workspace units
//! grasp_threshold = 0.3    # gripper value below which it counts as closed
//! lift_threshold = 0.5     # bag height for lift_bag success
//! lift_hold_steps = 10     # consecutive ticks the bag must stay lifted
//! push_displacement = 0.4  # leftward box displacement for push_box
//! handover_x = 0.3         # block x beyond which a right-held block counts
//! home_joints = [1.9, -1.5, 1.2415926535897931, 1.5]
//!
//! [left_arm]
//! base_position = [-1.1, 0.0]
//! link_lengths = [0.9, 0.8]
//! joint_limits = [[-0.2, 3.0], [-2.9, 2.9]]
//! elbow_sign = -1.0
//!
//! [viewport]
//! x_min = -1.6
//! x_max = 1.6
//! y_min = -0.4
//! y_max = 2.8
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kinematics::ArmConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Viewport {
    fn default() -> Self {
        Self {
            x_min: -1.6,
            x_max: 1.6,
            y_min: -0.4,
            y_max: 2.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub resolution: usize,
    pub delta_step: f64,
    pub gripper_rate: f64,
    pub r_grasp: f64,
    pub grasp_threshold: f64,
    pub lift_threshold: f64,
    pub lift_hold_steps: u32,
    pub push_displacement: f64,
    pub handover_x: f64,
    pub home_joints: [f64; 4],
    pub left_arm: ArmConfig,
    pub right_arm: ArmConfig,
    pub viewport: Viewport,
}

impl Default for SimConfig {
    fn default() -> Self {
        let left = ArmConfig {
            base_position: [-1.1, 0.0],
            link_lengths: [0.9, 0.8],
            joint_limits: [[-0.2, 3.0], [-2.9, 2.9]],
            elbow_sign: -1.0,
        };
        // Mirror image of the left arm about x = 0.
        let right = ArmConfig {
            base_position: [1.1, 0.0],
            link_lengths: [0.9, 0.8],
            joint_limits: [[PI - 3.0, PI + 0.2], [-2.9, 2.9]],
            elbow_sign: 1.0,
        };
        Self {
            resolution: 64,
            delta_step: 0.1,
            gripper_rate: 0.25,
            r_grasp: 0.15,
            grasp_threshold: 0.3,
            lift_threshold: 0.5,
            lift_hold_steps: 10,
            push_displacement: 0.4,
            handover_x: 0.3,
            home_joints: [1.9, -1.5, PI - 1.9, 1.5],
            left_arm: left,
            right_arm: right,
            viewport: Viewport::default(),
        }
    }
}

impl SimConfig {
    pub fn arm(&self, idx: usize) -> &ArmConfig {
        match idx {
            0 => &self.left_arm,
            _ => &self.right_arm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.resolution < 8 {
            return bad("resolution must be >= 8".into());
        }
        for (name, v) in [
            ("delta_step", self.delta_step),
            ("gripper_rate", self.gripper_rate),
            ("r_grasp", self.r_grasp),
            ("grasp_threshold", self.grasp_threshold),
            ("lift_threshold", self.lift_threshold),
            ("push_displacement", self.push_displacement),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, arm) in [("left_arm", &self.left_arm), ("right_arm", &self.right_arm)] {
            arm.validate().map_err(|m| Error::Config(format!("{name}: {m}")))?;
        }
        let vp = &self.viewport;
        if !(vp.x_min < vp.x_max && vp.y_min < vp.y_max) {
            return bad("viewport bounds are inverted".into());
        }
        for arm in 0..2 {
            let q = [self.home_joints[2 * arm], self.home_joints[2 * arm + 1]];
            if !self.arm(arm).within_limits(q) {
                return bad(format!("home_joints for arm {arm} violate joint limits"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Workspace units per pixel (square pixels assumed).
    pub fn pixel_size(&self) -> f64 {
        (self.viewport.x_max - self.viewport.x_min) / self.resolution as f64
    }

    /// Workspace coordinates of the centre of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let vp = &self.viewport;
        let n = self.resolution as f64;
        [
            vp.x_min + (col as f64 + 0.5) * (vp.x_max - vp.x_min) / n,
            vp.y_max - (row as f64 + 0.5) * (vp.y_max - vp.y_min) / n,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_overrides() {
        let cfg = SimConfig::from_toml_str("resolution = 32\nr_grasp = 0.2\n").unwrap();
        assert_eq!(cfg.resolution, 32);
        assert_eq!(cfg.r_grasp, 0.2);
        assert_eq!(cfg.delta_step, 0.1);
    }

    #[test]
    fn rejects_bad_link_lengths() {
        let s = "[left_arm]\nbase_position=[0.0,0.0]\nlink_lengths=[0.0,1.0]\n\
                 joint_limits=[[-1.0,1.0],[-1.0,1.0]]\nelbow_sign=1.0\n";
        assert!(SimConfig::from_toml_str(s).is_err());
    }

    #[test]
    fn rejects_unknown_shape() {
        assert!(SimConfig::from_toml_str("resolution = \"big\"").is_err());
    }
}
