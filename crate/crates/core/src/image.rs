//! Small float images and their raw dump format.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};

/// Row-major, channel-interleaved image with pixel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid("image dimensions must be positive");
        }
        if channels != 1 && channels != 3 {
            return invalid(format!("unsupported channel count {channels}"));
        }
        if pixels.len() != width * height * channels {
            return invalid(format!(
                "{}x{}x{} image needs {} pixels, got {}",
                width,
                height,
                channels,
                width * height * channels,
                pixels.len()
            ));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("pixel values must lie in [0, 1]");
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Builds an image from unclamped values, clamping each into `[0, 1]`.
    /// Non-finite values become 0.
    pub fn from_unclamped(
        width: usize,
        height: usize,
        channels: usize,
        values: impl IntoIterator<Item = f32>,
    ) -> Result<Self> {
        let pixels = values
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Self::new(width, height, channels, pixels)
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Pixel at clamped integer coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel luma (0.299, 0.587, 0.114); grayscale images pass through.
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f64).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
                .collect(),
        }
    }

    /// Pixels as a flat feature vector (row-major, channel-interleaved).
    pub fn flatten(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Mean absolute per-pixel difference.
    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        if !self.same_shape(other) {
            return invalid("image shapes differ");
        }
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(total / self.pixels.len() as f64)
    }

    /// Raw dump: width, height, channels as u32 LE, then f32 LE pixels.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        for v in [self.width, self.height, self.channels] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for p in &self.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [w, h, c] = dims;
        let n = w
            .checked_mul(h)
            .and_then(|v| v.checked_mul(c))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::Format {
                what: "image",
                reason: format!("implausible size {w}x{h}x{c}"),
            })?;
        let mut pixels = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            pixels.push(f32::from_le_bytes(b4));
        }
        Self::new(w, h, c, pixels).map_err(|e| Error::Format {
            what: "image",
            reason: e.to_string(),
        })
    }
}
