//! RGB frames in planar layout with values in [-1, 1].

use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Channel-major (`3 × height × width`) samples.
    pub data: Vec<f32>,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }
}

impl Frame {
    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let plane = (width * height) as usize;
        let mut data = Vec::with_capacity(plane * 3);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, plane));
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * (width * height) as usize {
            return Err(Error::SizeMismatch(format!(
                "{} samples for {}x{} frame",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    fn plane(&self) -> usize {
        (self.width * self.height) as usize
    }

    #[inline]
    pub fn get(&self, c: usize, x: u32, y: u32) -> f32 {
        self.data[c * self.plane() + (y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: u32, y: u32, v: f32) {
        let plane = self.plane();
        self.data[c * plane + (y * self.width + x) as usize] = v;
    }

    pub fn same_size(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn check_box(&self, b: &PixelBox) -> Result<()> {
        if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > self.width || b.y1 > self.height {
            return Err(Error::OutOfBounds {
                box_: (b.x0, b.y0, b.x1, b.y1),
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn crop(&self, b: &PixelBox) -> Result<Frame> {
        self.check_box(b)?;
        let mut out = Frame::zeros(b.width(), b.height());
        for c in 0..3 {
            for y in 0..b.height() {
                for x in 0..b.width() {
                    out.set(c, x, y, self.get(c, b.x0 + x, b.y0 + y));
                }
            }
        }
        Ok(out)
    }

    /// Writes `patch` into the box, replacing the pixels there.
    pub fn paste(&self, patch: &Frame, b: &PixelBox) -> Result<Frame> {
        self.check_box(b)?;
        if patch.width != b.width() || patch.height != b.height() {
            return Err(Error::SizeMismatch(format!(
                "patch {}x{} vs box {}x{}",
                patch.width,
                patch.height,
                b.width(),
                b.height()
            )));
        }
        let mut out = self.clone();
        for c in 0..3 {
            for y in 0..b.height() {
                for x in 0..b.width() {
                    out.set(c, b.x0 + x, b.y0 + y, patch.get(c, x, y));
                }
            }
        }
        Ok(out)
    }

    /// Luma in [0, 1] (BT.601 weights), row-major.
    pub fn to_gray(&self) -> Vec<f64> {
        let plane = self.plane();
        (0..plane)
            .map(|i| {
                let r = (self.data[i] as f64 + 1.0) / 2.0;
                let g = (self.data[plane + i] as f64 + 1.0) / 2.0;
                let b = (self.data[2 * plane + i] as f64 + 1.0) / 2.0;
                0.299 * r + 0.587 * g + 0.114 * b
            })
            .collect()
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let mut out = Frame::zeros(w, h);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, x, y, p[c] as f32 / 127.5 - 1.0);
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let px = |c| ((self.get(c, x, y).clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Frame> {
        let img = image::open(path)?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    /// Saves as a lossless 8-bit PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Bilinear resampling with pixel centers aligned.
    pub fn resized(&self, width: u32, height: u32) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!("cannot resize to {width}x{height}")));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let axis = |i: u32, from: u32, to: u32| -> (u32, u32, f32) {
            let s = ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
            let lo = s.floor() as u32;
            (lo, (lo + 1).min(from - 1), (s - lo as f64) as f32)
        };
        let mut out = Frame::zeros(width, height);
        for y in 0..height {
            let (y0, y1, ty) = axis(y, self.height, height);
            for x in 0..width {
                let (x0, x1, tx) = axis(x, self.width, width);
                for c in 0..3 {
                    let top = self.get(c, x0, y0) * (1.0 - tx) + self.get(c, x1, y0) * tx;
                    let bottom = self.get(c, x0, y1) * (1.0 - tx) + self.get(c, x1, y1) * tx;
                    out.set(c, x, y, top * (1.0 - ty) + bottom * ty);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Frame) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}
