//! Rigid parts making up a rendered scene.
//!
//! Every visible element is a rigid part with its own 2D frame; the renderer
//! hit-tests parts back to front, and ground-truth optical flow maps a pixel
//! through the frame of the part it belongs to.

use super::{ObjectKind, SimConfig, SimState, LEFT, RIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartId {
    Background,
    Table,
    Object(usize),
    Link { arm: usize, link: usize },
    Finger { arm: usize, side: usize },
}

impl PartId {
    pub fn arm(self) -> Option<usize> {
        match self {
            PartId::Link { arm, .. } | PartId::Finger { arm, .. } => Some(arm),
            _ => None,
        }
    }
}

/// Rigid 2D frame: `world = origin + R(angle) · local`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame2 {
    pub origin: [f64; 2],
    pub angle: f64,
}

impl Frame2 {
    pub const IDENTITY: Frame2 = Frame2 {
        origin: [0.0, 0.0],
        angle: 0.0,
    };

    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.origin[0];
        let dy = p[1] - self.origin[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn to_world(&self, q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [
            self.origin[0] + c * q[0] - s * q[1],
            self.origin[1] + s * q[0] + c * q[1],
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Shape {
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Segment from the local origin along +x, thickened by `radius`.
    Capsule { len: f64, radius: f64 },
}

impl Shape {
    fn contains(&self, q: [f64; 2]) -> bool {
        match *self {
            Shape::Rect { x0, x1, y0, y1 } => q[0] >= x0 && q[0] <= x1 && q[1] >= y0 && q[1] <= y1,
            Shape::Capsule { len, radius } => {
                let t = q[0].clamp(0.0, len);
                let dx = q[0] - t;
                dx * dx + q[1] * q[1] <= radius * radius
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Part {
    pub id: PartId,
    pub frame: Frame2,
    pub shapes: Vec<(Shape, [u8; 3])>,
}

impl Part {
    /// Colour of the topmost shape of this part containing `p`.
    pub fn hit(&self, p: [f64; 2]) -> Option<[u8; 3]> {
        let q = self.frame.to_local(p);
        self.shapes
            .iter()
            .rev()
            .find(|(s, _)| s.contains(q))
            .map(|(_, c)| *c)
    }
}

pub(crate) const BACKGROUND: [u8; 3] = [235, 235, 235];
const TABLE: [u8; 3] = [150, 111, 80];
const LINK_COLORS: [[[u8; 3]; 2]; 2] = [
    [[40, 80, 190], [80, 130, 230]],
    [[190, 50, 40], [230, 100, 80]],
];
const FINGER_COLORS: [[u8; 3]; 2] = [[20, 40, 110], [110, 25, 20]];

const LINK_RADII: [f64; 2] = [0.06, 0.05];
const FINGER_LEN: f64 = 0.1;
const FINGER_HALF_WIDTH: f64 = 0.025;

fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Shape {
    Shape::Rect { x0, x1, y0, y1 }
}

fn object_shapes(kind: ObjectKind) -> Vec<(Shape, [u8; 3])> {
    match kind {
        ObjectKind::Bag => vec![
            (rect(-0.24, -0.16, 0.28, 0.46), [30, 110, 50]),
            (rect(0.16, 0.24, 0.28, 0.46), [30, 110, 50]),
            (rect(-0.25, 0.25, 0.0, 0.3), [60, 160, 80]),
        ],
        ObjectKind::Box => vec![
            (rect(-0.2, 0.2, 0.0, 0.3), [205, 150, 60]),
            (rect(-0.3, -0.19, 0.1, 0.2), [140, 95, 30]),
            (rect(0.19, 0.3, 0.1, 0.2), [140, 95, 30]),
        ],
        ObjectKind::Block => vec![(rect(-0.08, 0.08, 0.0, 0.16), [140, 70, 170])],
    }
}

/// Lateral offset of each finger from the end-effector axis.
fn finger_offset(opening: f64) -> f64 {
    0.035 + 0.05 * opening
}

/// Parts in back-to-front painting order.
pub(crate) fn scene_parts(cfg: &SimConfig, state: &SimState) -> Vec<Part> {
    let mut parts = Vec::with_capacity(4 + state.objects.len() + 8);
    parts.push(Part {
        id: PartId::Table,
        frame: Frame2::IDENTITY,
        shapes: vec![(rect(-1e3, 1e3, -1e3, 0.0), TABLE)],
    });
    for (i, o) in state.objects.iter().enumerate() {
        parts.push(Part {
            id: PartId::Object(i),
            frame: Frame2 {
                origin: o.position,
                angle: o.orientation,
            },
            shapes: object_shapes(o.kind),
        });
    }
    for arm in [LEFT, RIGHT] {
        let a = cfg.arm(arm);
        let [t1, t2] = state.arm_joints(arm);
        let elbow = a.elbow([t1, t2]);
        let ee = state.ee(cfg, arm);
        let frames = [
            Frame2 {
                origin: a.base_position,
                angle: t1,
            },
            Frame2 {
                origin: elbow,
                angle: t1 + t2,
            },
        ];
        for link in 0..2 {
            parts.push(Part {
                id: PartId::Link { arm, link },
                frame: frames[link],
                shapes: vec![(
                    Shape::Capsule {
                        len: a.link_lengths[link],
                        radius: LINK_RADII[link],
                    },
                    LINK_COLORS[arm][link],
                )],
            });
        }
        let off = finger_offset(state.grippers[arm]);
        let ee_frame = Frame2 {
            origin: ee.position,
            angle: ee.angle,
        };
        for (side, sign) in [(0usize, 1.0), (1, -1.0)] {
            parts.push(Part {
                id: PartId::Finger { arm, side },
                frame: Frame2 {
                    origin: ee_frame.to_world([0.0, sign * off]),
                    angle: ee.angle,
                },
                shapes: vec![(
                    rect(0.0, FINGER_LEN, -FINGER_HALF_WIDTH, FINGER_HALF_WIDTH),
                    FINGER_COLORS[arm],
                )],
            });
        }
    }
    parts
}
