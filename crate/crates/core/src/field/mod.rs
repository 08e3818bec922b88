//! Explicit voxel radiance field: the map.
//!
//! Density (1/m) and RGB emission live at voxel centers and are read back by
//! trilinear interpolation. Volume rendering, photometric training and the
//! on-disk format are in the submodules.

mod io;
mod render;
mod train;

pub use io::{field_file_size, load_field, save_field, FIELD_MAGIC, FIELD_VERSION};
pub use render::{render_image, render_ray, RayRender, RenderOptions, RenderedView};
pub use train::{holdout_indices, 
    loss_and_gradient, train, Adam, FieldGradient, RayBatch, TrainConfig, TrainReport, TrainView,
};

use thiserror::Error;

use crate::geom::Vec3;
use crate::image::{ImageError, RgbImage};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a field file (bad magic)")]
    BadMagic,
    #[error("unsupported field file version {0}")]
    VersionUnsupported(u32),
    #[error("field file checksum mismatch")]
    ChecksumMismatch,
    #[error("field file truncated or malformed: {0}")]
    Malformed(String),
    #[error("training needs at least two images")]
    EmptyDataset,
    #[error("all training cameras coincide")]
    DegenerateBounds,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Axis-aligned voxel grid of (density, color).
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    bbox_min: [f32; 3],
    bbox_max: [f32; 3],
    dims: [usize; 3],
    /// x-fastest, ≥ 0.
    pub(crate) density: Vec<f32>,
    /// x-fastest, each channel in [0, 1].
    pub(crate) color: Vec<[f32; 3]>,
    // cached geometry
    min: Vec3,
    inv_voxel: Vec3,
}

/// Corner indices and weights of a trilinear lookup.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Trilinear {
    pub idx: [usize; 8],
    pub w: [f64; 8],
}

impl RadianceField {
    pub fn new(
        bbox_min: [f32; 3],
        bbox_max: [f32; 3],
        dims: [usize; 3],
        density: f32,
        color: [f32; 3],
    ) -> Result<Self, FieldError> {
        let n = dims.iter().product::<usize>();
        Self::from_parts(bbox_min, bbox_max, dims, vec![density; n], vec![color; n])
    }

    pub fn from_parts(
        bbox_min: [f32; 3],
        bbox_max: [f32; 3],
        dims: [usize; 3],
        density: Vec<f32>,
        color: Vec<[f32; 3]>,
    ) -> Result<Self, FieldError> {
        let bad = |m: String| Err(FieldError::Invalid(m));
        if (0..3).any(|a| !(bbox_max[a] > bbox_min[a]) || !bbox_min[a].is_finite() || !bbox_max[a].is_finite()) {
            return bad(format!("bbox {bbox_min:?}..{bbox_max:?} is empty"));
        }
        if dims.contains(&0) {
            return bad(format!("dims {dims:?} must be positive"));
        }
        let n = dims.iter().product::<usize>();
        if density.len() != n || color.len() != n {
            return bad("payload length does not match dims".into());
        }
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return bad("densities must be finite and non-negative".into());
        }
        if color.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("colors must lie in [0, 1]".into());
        }
        let min = Vec3::new(bbox_min[0] as f64, bbox_min[1] as f64, bbox_min[2] as f64);
        let max = Vec3::new(bbox_max[0] as f64, bbox_max[1] as f64, bbox_max[2] as f64);
        let ext = max - min;
        let inv_voxel = Vec3::new(
            dims[0] as f64 / ext.x,
            dims[1] as f64 / ext.y,
            dims[2] as f64 / ext.z,
        );
        Ok(Self {
            bbox_min,
            bbox_max,
            dims,
            density,
            color,
            min,
            inv_voxel,
        })
    }

    pub fn bbox_min(&self) -> [f32; 3] {
        self.bbox_min
    }

    pub fn bbox_max(&self) -> [f32; 3] {
        self.bbox_max
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let m = self.bbox_max;
        (self.min, Vec3::new(m[0] as f64, m[1] as f64, m[2] as f64))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.density.len()
    }

    pub fn voxel_size(&self) -> Vec3 {
        self.inv_voxel.map(|v| 1.0 / v)
    }

    pub fn density(&self) -> &[f32] {
        &self.density
    }

    pub fn color(&self) -> &[[f32; 3]] {
        &self.color
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let vs = self.voxel_size();
        Vec3::new(
            self.min.x + (x as f64 + 0.5) * vs.x,
            self.min.y + (y as f64 + 0.5) * vs.y,
            self.min.z + (z as f64 + 0.5) * vs.z,
        )
    }

    /// Writes one voxel, clamping density to ≥ 0 and color to [0, 1].
    pub fn set_voxel(&mut self, i: usize, density: f32, color: [f32; 3]) {
        self.density[i] = density.max(0.0);
        self.color[i] = color.map(|c| c.clamp(0.0, 1.0));
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = self.bbox();
        (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }

    #[inline]
    pub(crate) fn trilinear(&self, p: &Vec3) -> Option<Trilinear> {
        let mut base = [0usize; 3];
        let mut step = [0usize; 3];
        let mut frac = [0f64; 3];
        let strides = [1, self.dims[0], self.dims[0] * self.dims[1]];
        for a in 0..3 {
            let g = (p[a] - self.min[a]) * self.inv_voxel[a];
            let n = self.dims[a];
            if !(g >= 0.0 && g <= n as f64) {
                return None;
            }
            let g = (g - 0.5).clamp(0.0, (n - 1) as f64);
            if n == 1 {
                continue;
            }
            let i0 = (g.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = g - i0 as f64;
            step[a] = strides[a];
        }
        let b = base[0] + strides[1] * base[1] + strides[2] * base[2];
        let [fx, fy, fz] = frac;
        let mut t = Trilinear {
            idx: [0; 8],
            w: [0.0; 8],
        };
        for c in 0..8 {
            let (ox, oy, oz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            t.idx[c] = b + ox * step[0] + oy * step[1] + oz * step[2];
            t.w[c] = (if ox == 1 { fx } else { 1.0 - fx })
                * (if oy == 1 { fy } else { 1.0 - fy })
                * (if oz == 1 { fz } else { 1.0 - fz });
        }
        Some(t)
    }

    #[inline]
    pub(crate) fn eval(&self, t: &Trilinear) -> (f64, [f64; 3]) {
        let mut s = 0.0;
        let mut c = [0.0; 3];
        for k in 0..8 {
            let w = t.w[k];
            let i = t.idx[k];
            s += w * self.density[i] as f64;
            let col = self.color[i];
            c[0] += w * col[0] as f64;
            c[1] += w * col[1] as f64;
            c[2] += w * col[2] as f64;
        }
        (s, c)
    }

    /// Density and color at a world point. Outside the bounding box the field
    /// is vacuum with black emission.
    pub fn sample(&self, p: &Vec3) -> (f64, [f64; 3]) {
        match self.trilinear(p) {
            Some(t) => self.eval(&t),
            None => (0.0, [0.0; 3]),
        }
    }

    /// Ray parameter interval inside the bounding box, if any.
    pub fn clip(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let (lo, hi) = self.bbox();
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < lo[a] || origin[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t1 > t0).then_some((t0, t1))
    }
}

/// Peak signal-to-noise ratio for images in [0, 1], capped at 100 dB.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, FieldError> {
    a.same_dims(b)?;
    let n = a.data.len().max(1) as f64;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}
