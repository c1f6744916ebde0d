//! Optical flow ↔ flow-video conversion.
//!
//! A displacement `f = (u, v)` (pixels, image coordinates with y down) is
//! drawn as a colour whose hue comes from the direction `atan2(-v, -u)` on
//! the colour wheel and whose saturation is `‖f‖ / f_max`, clamped to 1.
//! Zero motion is exactly white. `f_max` is fixed per dataset so the mapping
//! is invertible and comparable across frames.

pub mod wheel;

use std::f64::consts::PI;

use crate::image::{Rgb8Image, Video};
use crate::{Error, Result};

/// Number of flow frames per clip; the flow video adds a white frame 0.
pub const FLOW_FRAMES: usize = 16;
pub const CLIP_LEN: usize = FLOW_FRAMES + 1;

/// Residual (8-bit units, L2 over channels) beyond which a decoded pixel is
/// considered off the wheel manifold.
pub const MANIFOLD_TOLERANCE: f64 = 3.0;

/// One dense displacement field, row-major `H×W×2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 2],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 2] {
        let i = (row * self.width + col) * 2;
        [self.data[i], self.data[i + 1]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, f: [f64; 2]) {
        let i = (row * self.width + col) * 2;
        self.data[i] = f[0];
        self.data[i + 1] = f[1];
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.chunks_exact(2).map(|f| f[0].hypot(f[1]))
    }

    pub fn mean_magnitude(&self) -> f64 {
        let n = self.height * self.width;
        if n == 0 {
            return 0.0;
        }
        self.magnitudes().sum::<f64>() / n as f64
    }
}

/// `F_{0:N}`: displacement from frame 0 to each later frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub fields: Vec<FlowField>,
    pub f_max: f64,
}

impl FlowSequence {
    pub fn new(fields: Vec<FlowField>, f_max: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidArgument("flow sequence needs N >= 1".into()));
        }
        if !(f_max > 0.0 && f_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("f_max must be > 0, got {f_max}")));
        }
        let dims = (fields[0].height, fields[0].width);
        if fields.iter().any(|f| (f.height, f.width) != dims) {
            return Err(Error::shape(format!("{dims:?} for all fields"), "mixed sizes"));
        }
        Ok(Self { fields, f_max })
    }
}

/// Default normalisation bound: a quarter of the image diagonal.
pub fn default_f_max(height: usize, width: usize) -> f64 {
    ((height * height + width * width) as f64).sqrt() / 4.0
}

/// Magnitude and direction `θ = atan2(-v, -u)`, with `θ ∈ (-π, π]`.
///
/// The angle is meaningless at zero magnitude; encoders ignore it there.
pub fn flow_to_polar(f: [f64; 2]) -> (f64, f64) {
    let [u, v] = f;
    let mag = u.hypot(v);
    let mut theta = (-v).atan2(-u);
    if theta <= -PI {
        theta = PI;
    }
    (mag, theta)
}

/// Colour of one displacement under bound `f_max`.
pub fn encode_pixel(f: [f64; 2], f_max: f64) -> [u8; 3] {
    let (mag, theta) = flow_to_polar(f);
    let s = (mag / f_max).clamp(0.0, 1.0);
    if s == 0.0 {
        return [255; 3];
    }
    let h = wheel::hue(theta);
    h.map(|c| ((1.0 - s) * 255.0 + s * c).round_ties_even() as u8)
}

pub fn encode_field(field: &FlowField, f_max: f64) -> Result<Rgb8Image> {
    if field.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("flow field"));
    }
    let mut img = Rgb8Image::white(field.height, field.width);
    for row in 0..field.height {
        for col in 0..field.width {
            img.put(row, col, encode_pixel(field.get(row, col), f_max));
        }
    }
    Ok(img)
}

/// Renders every field of the sequence (no white frame prepended).
pub fn encode(seq: &FlowSequence) -> Result<Video> {
    seq.fields.iter().map(|f| encode_field(f, seq.f_max)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPixel {
    pub flow: [f64; 2],
    pub valid: bool,
}

/// Saturations `s` for which hue `h` renders exactly to `c`, as
/// `[lo, hi]`, or `None` if no saturation does.
fn consistent_saturation(d: [f64; 3], h: [f64; 3]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let dir = 255.0 - h[k];
        if dir <= 0.0 {
            if d[k].abs() > 0.5 {
                return None;
            }
        } else {
            lo = lo.max((d[k] - 0.5) / dir);
            hi = hi.min((d[k] + 0.5) / dir);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn least_squares(d: [f64; 3], h: [f64; 3]) -> (f64, f64) {
    let dir = h.map(|x| 255.0 - x);
    let s = ((d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2])
        / (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]))
        .clamp(0.0, 1.0);
    let r2 = (0..3).map(|k| (d[k] - s * dir[k]).powi(2)).sum::<f64>();
    (s, r2)
}

/// Inverts [`encode_pixel`].
///
/// The decoder finds the arc of table hues whose rays pass through the
/// 8-bit cell of `c` and returns its midpoint, which minimises the
/// worst-case angle error. Colours no hue can produce fall back to the
/// nearest ray and are flagged invalid when its residual exceeds
/// [`MANIFOLD_TOLERANCE`].
pub fn decode_pixel(c: [u8; 3], f_max: f64) -> DecodedPixel {
    if c == [255; 3] {
        return DecodedPixel {
            flow: [0.0, 0.0],
            valid: true,
        };
    }
    let d = c.map(|x| 255.0 - x as f64);
    let table = wheel::table();
    let n = wheel::TABLE_SIZE as i64;

    // Coarse nearest ray, then refine.
    const COARSE: usize = 16;
    let mut best = 0usize;
    let mut best_r2 = f64::INFINITY;
    for j in (0..wheel::TABLE_SIZE).step_by(COARSE) {
        let (_, r2) = least_squares(d, table[j]);
        if r2 < best_r2 {
            best = j;
            best_r2 = r2;
        }
    }
    let centre = best as i64;
    for dj in -(2 * COARSE as i64)..=(2 * COARSE as i64) {
        let j = (centre + dj).rem_euclid(n) as usize;
        let (_, r2) = least_squares(d, table[j]);
        if r2 < best_r2 {
            best = j;
            best_r2 = r2;
        }
    }

    // Grow the consistent arc around the nearest ray in both directions.
    const REACH: i64 = 512;
    let consistent = |off: i64| {
        let j = (best as i64 + off).rem_euclid(n) as usize;
        consistent_saturation(d, table[j])
    };
    let (theta, s) = if consistent(0).is_some() {
        let mut lo = 0i64;
        while lo > -REACH && consistent(lo - 1).is_some() {
            lo -= 1;
        }
        let mut hi = 0i64;
        while hi < REACH && consistent(hi + 1).is_some() {
            hi += 1;
        }
        // Midpoint of the arc in table units; half steps interpolate.
        let mid2 = lo + hi;
        let j = best as f64 + mid2 as f64 / 2.0;
        let theta = wheel::table_angle(0) + j * 2.0 * PI / n as f64;
        let (s_lo, s_hi) = consistent(mid2.div_euclid(2)).expect("inside the arc");
        (theta, 0.5 * (s_lo + s_hi))
    } else {
        if best_r2.sqrt() > MANIFOLD_TOLERANCE {
            return DecodedPixel {
                flow: [0.0, 0.0],
                valid: false,
            };
        }
        (wheel::table_angle(best), least_squares(d, table[best]).0)
    };
    let mag = s * f_max;
    DecodedPixel {
        flow: [-mag * theta.cos(), -mag * theta.sin()],
        valid: true,
    }
}

#[derive(Debug, Clone)]
pub struct DecodedFlow {
    pub sequence: FlowSequence,
    /// Per frame, per pixel: true where the colour was off the wheel.
    pub invalid: Vec<Vec<bool>>,
}

impl DecodedFlow {
    pub fn invalid_count(&self) -> usize {
        self.invalid.iter().flatten().filter(|&&b| b).count()
    }
}

pub fn decode_frame(frame: &Rgb8Image, f_max: f64) -> (FlowField, Vec<bool>) {
    let (h, w) = frame.dims();
    let mut field = FlowField::zeros(h, w);
    let mut invalid = vec![false; h * w];
    for row in 0..h {
        for col in 0..w {
            let p = decode_pixel(frame.get(row, col), f_max);
            field.set(row, col, p.flow);
            invalid[row * w + col] = !p.valid;
        }
    }
    (field, invalid)
}

pub fn decode(frames: &[Rgb8Image], f_max: f64) -> Result<DecodedFlow> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to decode".into()));
    }
    let (fields, invalid): (Vec<_>, Vec<_>) =
        frames.iter().map(|f| decode_frame(f, f_max)).unzip();
    Ok(DecodedFlow {
        sequence: FlowSequence::new(fields, f_max)?,
        invalid,
    })
}

/// Prepends the white frame, turning 16 flow frames into a 17-frame video.
pub fn assemble_flow_video(frames: Video) -> Result<Video> {
    if frames.len() != FLOW_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "flow video needs exactly {FLOW_FRAMES} frames before the white frame, got {}",
            frames.len()
        )));
    }
    let (h, w) = frames[0].dims();
    let mut out = Vec::with_capacity(CLIP_LEN);
    out.push(Rgb8Image::white(h, w));
    out.extend(frames);
    Ok(out)
}
