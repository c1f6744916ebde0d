//! Middlebury colour wheel (the construction used by RAFT's visualiser),
//! linearly interpolated between its 55 base hues.

use std::f64::consts::PI;
use std::sync::LazyLock;

/// Bins per segment: red→yellow→green→cyan→blue→magenta→red.
pub const SEGMENT_SIZES: [usize; 6] = [15, 6, 4, 11, 13, 6];
pub const NUM_HUES: usize = 55;
/// Entries in the inversion table.
pub const TABLE_SIZE: usize = 4096;

static BASE: LazyLock<[[f64; 3]; NUM_HUES]> = LazyLock::new(build_base);
static TABLE: LazyLock<Vec<[f64; 3]>> = LazyLock::new(|| {
    (0..TABLE_SIZE).map(|j| hue(table_angle(j))).collect()
});

fn build_base() -> [[f64; 3]; NUM_HUES] {
    let [ry, yg, gc, cb, bm, mr] = SEGMENT_SIZES;
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    let mut w = [[0.0; 3]; NUM_HUES];
    let mut k = 0;
    for i in 0..ry {
        w[k] = [255.0, ramp(i, ry), 0.0];
        k += 1;
    }
    for i in 0..yg {
        w[k] = [255.0 - ramp(i, yg), 255.0, 0.0];
        k += 1;
    }
    for i in 0..gc {
        w[k] = [0.0, 255.0, ramp(i, gc)];
        k += 1;
    }
    for i in 0..cb {
        w[k] = [0.0, 255.0 - ramp(i, cb), 255.0];
        k += 1;
    }
    for i in 0..bm {
        w[k] = [ramp(i, bm), 0.0, 255.0];
        k += 1;
    }
    for i in 0..mr {
        w[k] = [255.0, 0.0, 255.0 - ramp(i, mr)];
        k += 1;
    }
    w
}

pub fn base_hues() -> &'static [[f64; 3]; NUM_HUES] {
    &BASE
}

/// Fully saturated wheel colour (0–255 scale) for an angle in radians.
///
/// Periodic in 2π; `θ = ±π` both land on base hue 0 (pure red).
pub fn hue(theta: f64) -> [f64; 3] {
    let fk = (theta / PI + 1.0) * 0.5 * NUM_HUES as f64;
    let fl = fk.floor();
    let f = fk - fl;
    let k0 = (fl as i64).rem_euclid(NUM_HUES as i64) as usize;
    let k1 = (k0 + 1) % NUM_HUES;
    let (a, b) = (BASE[k0], BASE[k1]);
    [
        (1.0 - f) * a[0] + f * b[0],
        (1.0 - f) * a[1] + f * b[1],
        (1.0 - f) * a[2] + f * b[2],
    ]
}

/// Angle of inversion-table entry `j`, covering `(-π, π]`.
pub fn table_angle(j: usize) -> f64 {
    -PI + (j + 1) as f64 * (2.0 * PI / TABLE_SIZE as f64)
}

pub(crate) fn table() -> &'static [[f64; 3]] {
    &TABLE
}
