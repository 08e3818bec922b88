//! Float images and their PNM encodings.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Row-major RGB image with channels interleaved, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Luma with weights 0.299 / 0.587 / 0.114.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Separable box filter of odd width `k`, clamping at the borders.
    pub fn box_blur(&self, k: usize) -> RgbImage {
        if k <= 1 {
            return self.clone();
        }
        let planes: Vec<GrayImage> = (0..3).map(|c| self.channel(c).box_blur(k)).collect();
        let mut out = RgbImage::new(self.width, self.height);
        for i in 0..self.width * self.height {
            for (c, p) in planes.iter().enumerate() {
                out.data[3 * i + c] = p.data[i];
            }
        }
        out
    }

    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// 8-bit quantization as stored on disk.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| quantize8(*v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            data: bytes.iter().map(|b| *b as f32 / 255.0).collect(),
        }
    }

    /// Writes a binary P6 file.
    pub fn save_ppm(&self, path: &Path) -> Result<u64, ImageError> {
        let buf: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
                .expect("buffer matches dimensions");
        let mut bytes = Vec::new();
        image::codecs::pnm::PnmEncoder::new(&mut bytes)
            .with_subtype(image::codecs::pnm::PnmSubtype::Pixmap(
                image::codecs::pnm::SampleEncoding::Binary,
            ))
            .encode(buf.as_raw().as_slice(), buf.width(), buf.height(), image::ExtendedColorType::Rgb8)
            .map_err(|e| ImageError::Decode {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
        write_file(path, &bytes)
    }

    pub fn load_ppm(path: &Path) -> Result<Self, ImageError> {
        let img = open(path)?.to_rgb8();
        Ok(Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw()))
    }

    pub fn same_dims(&self, other: &RgbImage) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear lookup at a subpixel position inside the image.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<[(usize, usize, f64); 4]> {
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        Some([
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ])
    }

    pub fn box_blur(&self, k: usize) -> GrayImage {
        let r = (k / 2) as isize;
        let pass = |src: &GrayImage, horizontal: bool| {
            let mut out = GrayImage::new(src.width, src.height);
            for y in 0..src.height {
                for x in 0..src.width {
                    let mut acc = 0.0f32;
                    for d in -r..=r {
                        let (sx, sy) = if horizontal {
                            ((x as isize + d).clamp(0, src.width as isize - 1) as usize, y)
                        } else {
                            (x, (y as isize + d).clamp(0, src.height as isize - 1) as usize)
                        };
                        acc += src.get(sx, sy);
                    }
                    out.set(x, y, acc / (2 * r + 1) as f32);
                }
            }
            out
        };
        pass(&pass(self, true), false)
    }

    /// Separable Gaussian smoothing with clamped borders.
    pub fn gaussian_blur(&self, sigma: f32) -> GrayImage {
        let r = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f32> = (-r..=r).map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp()).collect();
        let sum: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= sum);
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = GrayImage::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let acc: f32 = (-r..=r)
                    .map(|d| kernel[(d + r) as usize] * self.get((x + d).clamp(0, w - 1) as usize, y as usize))
                    .sum();
                tmp.set(x as usize, y as usize, acc);
            }
        }
        let mut out = GrayImage::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let acc: f32 = (-r..=r)
                    .map(|d| kernel[(d + r) as usize] * tmp.get(x as usize, (y + d).clamp(0, h - 1) as usize))
                    .sum();
                out.set(x as usize, y as usize, acc);
            }
        }
        out
    }

    /// Writes a 16-bit binary P5 file with the given per-unit scale
    /// (e.g. 1000 to store meters as millimeters). Values saturate at 65535.
    pub fn save_pgm16(&self, path: &Path, scale: f64) -> Result<u64, ImageError> {
        // the pnm encoder has no 16-bit support; the header is trivial
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for v in &self.data {
            let q = (*v as f64 * scale).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        write_file(path, &bytes)
    }

    pub fn load_pgm16(path: &Path, scale: f64) -> Result<Self, ImageError> {
        let img = open(path)?.to_luma16();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|v| (*v as f64 / scale) as f32).collect(),
        })
    }
}

pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn open(path: &Path) -> Result<image::DynamicImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).map_err(|e| ImageError::Decode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<u64, ImageError> {
    std::fs::write(path, bytes).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(5, 3);
        img.set(2, 1, [1.0, 0.5, 0.25]);
        let p = dir.path().join("a.ppm");
        let n = img.save_ppm(&p).unwrap();
        assert_eq!(n, std::fs::metadata(&p).unwrap().len());
        assert!(std::fs::read(&p).unwrap().starts_with(b"P6"));
        let back = RgbImage::load_ppm(&p).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
    }

    #[test]
    fn depth_pgm_is_lossless_to_a_millimeter() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = GrayImage::new(4, 2);
        d.set(0, 0, 3.2716);
        d.set(3, 1, 12.0004);
        let p = dir.path().join("d.pgm");
        d.save_pgm16(&p, 1000.0).unwrap();
        assert!(std::fs::read(&p).unwrap().starts_with(b"P5"));
        let back = GrayImage::load_pgm16(&p, 1000.0).unwrap();
        for (a, b) in d.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.0005 + 1e-6, "{a} vs {b}");
        }
        assert_eq!(back.get(1, 0), 0.0);
    }

    #[test]
    fn box_blur_preserves_constants() {
        let img = RgbImage::filled(7, 5, [0.2, 0.4, 0.6]);
        let b = img.box_blur(3);
        for (a, b) in img.data.iter().zip(&b.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
