//! Float RGB images and PNG conversion.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// Row-major RGB image with channel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: u32,
    height: u32,
    pixels: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32, fill: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> [f64; 3] {
        self.pixels[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, rgb: [f64; 3]) {
        self.pixels[row as usize * self.width as usize + col as usize] = rgb;
    }

    /// Decodes an 8-bit PNG; alpha is composited over `background`.
    pub fn load_png(path: &Path, background: [f64; 3]) -> Result<Self> {
        let img = image::open(path)?.into_rgba8();
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                let a = p[3] as f64 / 255.0;
                let mut out = [0.0; 3];
                for c in 0..3 {
                    out[c] = a * (p[c] as f64 / 255.0) + (1.0 - a) * background[c];
                }
                out
            })
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let p = self.get(y, x);
            Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }

    /// Round-trips every channel through 8-bit storage.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| p.map(|v| quantize(v) as f64 / 255.0))
                .collect(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
