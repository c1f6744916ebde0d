//! Planar two-link forward and inverse kinematics.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    /// Shoulder position in workspace units.
    pub base_position: [f64; 2],
    pub link_lengths: [f64; 2],
    /// Per-joint `[min, max]` in radians.
    pub joint_limits: [[f64; 2]; 2],
    /// IK branch selector, `+1.0` or `-1.0`; the sign of the elbow angle.
    pub elbow_sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: [f64; 2],
    /// Absolute angle of the distal link.
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkSolution {
    Reachable([f64; 2]),
    Unreachable,
}

impl IkSolution {
    pub fn joints(self) -> Option<[f64; 2]> {
        match self {
            IkSolution::Reachable(j) => Some(j),
            IkSolution::Unreachable => None,
        }
    }
}

impl ArmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.link_lengths[0] > 0.0 && self.link_lengths[1] > 0.0) {
            return Err("link_lengths must be strictly positive".into());
        }
        for (i, lim) in self.joint_limits.iter().enumerate() {
            if !(lim[0] < lim[1]) {
                return Err(format!("joint_limits[{i}]: min must be < max"));
            }
        }
        if self.elbow_sign != 1.0 && self.elbow_sign != -1.0 {
            return Err("elbow_sign must be +1 or -1".into());
        }
        Ok(())
    }

    pub fn reach(&self) -> (f64, f64) {
        let [l1, l2] = self.link_lengths;
        ((l1 - l2).abs(), l1 + l2)
    }

    pub fn within_limits(&self, joints: [f64; 2]) -> bool {
        joints
            .iter()
            .zip(&self.joint_limits)
            .all(|(q, lim)| *q >= lim[0] && *q <= lim[1])
    }

    pub fn clamp(&self, joints: [f64; 2]) -> [f64; 2] {
        [
            joints[0].clamp(self.joint_limits[0][0], self.joint_limits[0][1]),
            joints[1].clamp(self.joint_limits[1][0], self.joint_limits[1][1]),
        ]
    }

    pub fn elbow(&self, joints: [f64; 2]) -> [f64; 2] {
        let [bx, by] = self.base_position;
        let l1 = self.link_lengths[0];
        [bx + l1 * joints[0].cos(), by + l1 * joints[0].sin()]
    }
}

pub fn forward_kinematics(arm: &ArmConfig, joints: [f64; 2]) -> EePose {
    let [t1, t2] = joints;
    let [l1, l2] = arm.link_lengths;
    let [bx, by] = arm.base_position;
    let a = t1 + t2;
    EePose {
        position: [
            bx + l1 * t1.cos() + l2 * a.cos(),
            by + l1 * t1.sin() + l2 * a.sin(),
        ],
        angle: a,
    }
}

/// Analytic two-link IK on the branch selected by `arm.elbow_sign`.
///
/// Returns joints with the shoulder angle in `(-π, π]`; use
/// [`unwrap_near`] to pick the representative closest to a reference
/// configuration. Joint limits are not applied here.
pub fn inverse_kinematics(arm: &ArmConfig, target: [f64; 2]) -> IkSolution {
    if !(target[0].is_finite() && target[1].is_finite()) {
        return IkSolution::Unreachable;
    }
    let [l1, l2] = arm.link_lengths;
    let dx = target[0] - arm.base_position[0];
    let dy = target[1] - arm.base_position[1];
    let r2 = dx * dx + dy * dy;
    let r = r2.sqrt();
    let (lo, hi) = arm.reach();
    if r < lo || r > hi {
        return IkSolution::Unreachable;
    }
    let c2 = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let t2 = arm.elbow_sign * c2.acos();
    let t1 = dy.atan2(dx) - (l2 * t2.sin()).atan2(l1 + l2 * t2.cos());
    IkSolution::Reachable([wrap_angle(t1), t2])
}

/// Wraps into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Shifts each angle by a multiple of 2π to land closest to `reference`.
pub fn unwrap_near(joints: [f64; 2], reference: [f64; 2]) -> [f64; 2] {
    let mut out = joints;
    for i in 0..2 {
        out[i] = reference[i] + wrap_angle(joints[i] - reference[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_arm(sign: f64) -> ArmConfig {
        ArmConfig {
            base_position: [0.0, 0.0],
            link_lengths: [1.0, 1.0],
            joint_limits: [[-PI, PI], [-PI, PI]],
            elbow_sign: sign,
        }
    }

    fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn fk_examples() {
        let arm = unit_arm(1.0);
        assert!(close(forward_kinematics(&arm, [0.0, 0.0]).position, [2.0, 0.0], 1e-12));
        assert!(close(
            forward_kinematics(&arm, [PI / 2.0, 0.0]).position,
            [0.0, 2.0],
            1e-12
        ));
        assert!(close(
            forward_kinematics(&arm, [0.0, PI / 2.0]).position,
            [1.0, 1.0],
            1e-12
        ));
    }

    #[test]
    fn ik_examples() {
        let arm = unit_arm(1.0);
        assert_eq!(
            inverse_kinematics(&arm, [2.0, 0.0]),
            IkSolution::Reachable([0.0, 0.0])
        );
        let j = inverse_kinematics(&arm, [1.0, 1.0]).joints().unwrap();
        assert!(close(j, [0.0, PI / 2.0], 1e-12), "{j:?}");
        assert_eq!(inverse_kinematics(&arm, [3.0, 0.0]), IkSolution::Unreachable);
        assert_eq!(
            inverse_kinematics(&arm, [f64::NAN, 0.0]),
            IkSolution::Unreachable
        );
    }

    #[test]
    fn inner_hole_is_unreachable() {
        let arm = ArmConfig {
            link_lengths: [1.0, 0.5],
            ..unit_arm(1.0)
        };
        assert_eq!(inverse_kinematics(&arm, [0.2, 0.0]), IkSolution::Unreachable);
    }

    #[test]
    fn fk_ik_round_trip_on_grid() {
        for sign in [1.0, -1.0] {
            let arm = ArmConfig {
                base_position: [-1.1, 0.0],
                link_lengths: [0.9, 0.8],
                joint_limits: [[-PI, PI], [-PI, PI]],
                elbow_sign: sign,
            };
            let (lo, hi) = arm.reach();
            for i in 0..=60 {
                for j in 0..=60 {
                    let t = [-3.0 + 0.1 * i as f64, -3.0 + 0.1 * j as f64];
                    let d = ((t[0] + 1.1).powi(2) + t[1].powi(2)).sqrt();
                    match inverse_kinematics(&arm, t) {
                        IkSolution::Reachable(q) => {
                            let p = forward_kinematics(&arm, q).position;
                            let err = ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt();
                            assert!(err <= 1e-9, "target {t:?} err {err}");
                            assert!(q[1] * sign >= 0.0);
                        }
                        IkSolution::Unreachable => assert!(d < lo || d > hi),
                    }
                }
            }
        }
    }

    #[test]
    fn unwrap_picks_nearest_representative() {
        let j = unwrap_near([-3.0, 0.5], [3.2, 0.0]);
        assert!((j[0] - (-3.0 + 2.0 * PI)).abs() < 1e-12);
        assert_eq!(j[1], 0.5);
    }

    proptest! {
        #[test]
        fn round_trip_random_reachable(
            r in 0.05f64..1.95, phi in -PI..PI, sign in prop::sample::select(vec![1.0, -1.0])
        ) {
            let arm = unit_arm(sign);
            let t = [r * phi.cos(), r * phi.sin()];
            let q = inverse_kinematics(&arm, t).joints().unwrap();
            let p = forward_kinematics(&arm, q).position;
            prop_assert!(((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt() <= 1e-9);
        }

        #[test]
        fn wrap_angle_range(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
        }
    }
}
