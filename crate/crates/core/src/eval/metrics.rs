//! PSNR and SSIM on 8-bit images and videos.

use crate::image::Rgb8Image;
use crate::{Error, Result};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

fn check_pair(a: &[Rgb8Image], b: &[Rgb8Image]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        if x.dims() != y.dims() {
            return Err(Error::shape(format!("{:?}", x.dims()), format!("{:?}", y.dims())));
        }
    }
    Ok(())
}

/// Mean squared error on the 0–255 scale.
pub fn mse_video(a: &[Rgb8Image], b: &[Rgb8Image]) -> Result<f64> {
    check_pair(a, b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        for (&p, &q) in x.as_raw().iter().zip(y.as_raw()) {
            let d = p as f64 - q as f64;
            sum += d * d;
        }
        n += x.as_raw().len();
    }
    Ok(sum / n as f64)
}

/// `10·log10(255²/MSE)`, capped at 100 dB.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (L * L / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &Rgb8Image, b: &Rgb8Image) -> Result<f64> {
    psnr_video(std::slice::from_ref(a), std::slice::from_ref(b))
}

/// PSNR of the pooled MSE over all frames.
pub fn psnr_video(a: &[Rgb8Image], b: &[Rgb8Image]) -> Result<f64> {
    Ok(psnr_from_mse(mse_video(a, b)?))
}

/// Normalized 1D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..k).map(|i| taps[i] * plane[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| taps[i] * tmp[(r + i) * ow + c]).sum();
        }
    }
    out
}

fn channel_plane(img: &Rgb8Image, ch: usize) -> Vec<f64> {
    img.as_raw().chunks_exact(3).map(|p| p[ch] as f64).collect()
}

/// Mean SSIM over valid 11×11 Gaussian windows and the three channels.
pub fn ssim(a: &Rgb8Image, b: &Rgb8Image) -> Result<f64> {
    check_pair(std::slice::from_ref(a), std::slice::from_ref(b))?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    let mut total = 0.0;
    for ch in 0..3 {
        let x = channel_plane(a, ch);
        let y = channel_plane(b, ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, h, w, &taps);
        let my = filter_valid(&y, h, w, &taps);
        let exx = filter_valid(&xx, h, w, &taps);
        let eyy = filter_valid(&yy, h, w, &taps);
        let exy = filter_valid(&xy, h, w, &taps);
        let mut s = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cxy = exy[i] - ux * uy;
            s += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += s / mx.len() as f64;
    }
    Ok(total / 3.0)
}

/// Mean SSIM over frames.
pub fn ssim_video(a: &[Rgb8Image], b: &[Rgb8Image]) -> Result<f64> {
    check_pair(a, b)?;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += ssim(x, y)?;
    }
    Ok(s / a.len() as f64)
}
