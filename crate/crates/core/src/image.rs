//! Minimal 8-bit RGB frame type shared by the simulator, codec and metrics.

use std::path::Path;

use crate::{Error, Result};

/// Row-major `H×W×3` frame with 8 bits per channel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rgb8Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Rgb8Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Rgb8Image({}x{})", self.height, self.width)
    }
}

pub type Video = Vec<Rgb8Image>;

impl Rgb8Image {
    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn white(height: usize, width: usize) -> Self {
        Self::filled(height, width, [255; 3])
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::shape(height * width * 3, data.len()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_all(&self, rgb: [u8; 3]) -> bool {
        self.data.chunks_exact(3).all(|p| p == rgb)
    }

    /// Values mapped to `[-1, 1]` via `2·(c/255) − 1`.
    pub fn to_signed_unit(&self) -> Vec<f32> {
        self.data
            .iter()
            .map(|&c| 2.0 * (c as f32 / 255.0) - 1.0)
            .collect()
    }

    /// Inverse of [`to_signed_unit`](Self::to_signed_unit), clamping to range.
    pub fn from_signed_unit(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        if values.len() != height * width * 3 {
            return Err(Error::shape(height * width * 3, values.len()));
        }
        let data = values
            .iter()
            .map(|&v| {
                let c = ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round_ties_even();
                c as u8
            })
            .collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Per-pixel mean squared error with channels scaled to `[0, 1]`.
    pub fn mse_unit(&self, other: &Rgb8Image) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                format!("{:?}", self.dims()),
                format!("{:?}", other.dims()),
            ));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = (a as f64 - b as f64) / 255.0;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        ::image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            ::image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let enc = ::image::codecs::png::PngEncoder::new(&mut out);
        ::image::ImageEncoder::write_image(
            enc,
            &self.data,
            self.width as u32,
            self.height as u32,
            ::image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_raw(h as usize, w as usize, img.into_raw())
    }
}
