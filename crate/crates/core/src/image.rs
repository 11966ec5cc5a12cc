//! Planar image buffers and PNG/PFM output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result, Rgb};

/// Row-major image, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<T>,
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }
}

impl<T> Image<T> {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<T>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.pixels[y * self.width + x]
    }

    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.pixels[y * self.width + x]
    }

    pub fn same_size<U>(&self, other: &Image<U>) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(f).collect(),
        }
    }
}

impl Image<Rgb> {
    /// Box-filter downsampling by an integer factor. Trailing rows/columns
    /// that do not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> Image<Rgb> {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut out = Image::filled(w, h, Rgb::zeros());
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = Rgb::zeros();
                for dy in 0..factor {
                    for dx in 0..factor {
                        let sx = (x * factor + dx).min(self.width - 1);
                        let sy = (y * factor + dy).min(self.height - 1);
                        acc += self.get(sx, sy);
                    }
                }
                *out.get_mut(x, y) = acc * norm;
            }
        }
        out
    }

    /// Writes an 8-bit sRGB PNG of linear radiance.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in 0..3 {
                buf.push(encode_u8(linear_to_srgb(p[c])));
            }
        }
        let img = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer sized from image");
        img.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    /// Writes a little-endian colour PFM (linear float, bottom row first).
    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in 0..3 {
                    w.write_all(&(self.get(x, y)[c] as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an 8-bit PNG and decodes sRGB to linear radiance.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Image<Rgb>> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                Rgb::new(
                    srgb_to_linear(p[0] as f64 / 255.0),
                    srgb_to_linear(p[1] as f64 / 255.0),
                    srgb_to_linear(p[2] as f64 / 255.0),
                )
            })
            .collect();
        Ok(Image::from_pixels(w as usize, h as usize, pixels))
    }

    /// Reads a colour PFM written by [`Image::write_pfm`] (either endianness).
    pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image<Rgb>> {
        let bytes = std::fs::read(path)?;
        let bad = |m: &str| Error::Config(format!("malformed PFM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "PF" {
            return Err(bad("expected colour `PF` header"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("scale"))?;
        let data = &bytes[pos..];
        if data.len() < width * height * 12 {
            return Err(bad("truncated data"));
        }
        let read = |i: usize| {
            let b: [u8; 4] = data[i * 4..i * 4 + 4].try_into().unwrap();
            if scale < 0.0 {
                f32::from_le_bytes(b) as f64
            } else {
                f32::from_be_bytes(b) as f64
            }
        };
        let mut img = Image::filled(width, height, Rgb::zeros());
        for row in 0..height {
            let y = height - 1 - row;
            for x in 0..width {
                let i = (row * width + x) * 3;
                *img.get_mut(x, y) = Rgb::new(read(i), read(i + 1), read(i + 2));
            }
        }
        Ok(img)
    }
}

impl Image<f64> {
    /// Writes a grayscale 8-bit PNG of values in `[0, 1]` (no transfer curve).
    pub fn write_png_gray(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = self.pixels.iter().map(|&v| encode_u8(v)).collect();
        let img = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer sized from image");
        img.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    /// Writes a little-endian grayscale PFM.
    pub fn write_pfm_gray(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "Pf\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                w.write_all(&(*self.get(x, y) as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl Image<u32> {
    /// Overdraw counts normalized by `max_count` as a grayscale image.
    pub fn normalized(&self, max_count: u32) -> Image<f64> {
        let m = max_count.max(1) as f64;
        self.map(|&c| c as f64 / m)
    }

    pub fn total(&self) -> u64 {
        self.pixels.iter().map(|&c| c as u64).sum()
    }
}

fn encode_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// sRGB opto-electronic transfer function.
pub fn linear_to_srgb(x: f64) -> f64 {
    if x <= 0.0031308 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

/// Derivative of [`linear_to_srgb`].
pub fn linear_to_srgb_derivative(x: f64) -> f64 {
    if x <= 0.0031308 {
        12.92
    } else {
        1.055 / 2.4 * x.powf(1.0 / 2.4 - 1.0)
    }
}

pub fn srgb_to_linear(x: f64) -> f64 {
    if x <= 0.04045 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}
