use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::Bins;
use super::{psnr, render_image, FieldError, RadianceField, RenderOptions, Trilinear};
use crate::geom::{CameraModel, Pose, Ray};
use crate::image::RgbImage;

/// Rays with their target colors.
#[derive(Debug, Clone, Default)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub targets: Vec<[f64; 3]>,
    /// Per-ray keys for stratified jitter; empty means the ray index.
    pub keys: Vec<u64>,
}

impl RayBatch {
    pub fn push(&mut self, ray: Ray, target: [f64; 3], key: u64) {
        self.rays.push(ray);
        self.targets.push(target);
        self.keys.push(key);
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Gradient with the same layout as the field parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub density: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

impl FieldGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            density: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }
}

struct SampleGrad {
    tri: Trilinear,
    d_sigma: f64,
    d_color: [f64; 3],
}

/// Forward and backward pass of one ray for the loss `scale · |C − target|²`.
fn ray_backward(
    field: &RadianceField,
    ray: &Ray,
    target: &[f64; 3],
    opts: &RenderOptions,
    key: u64,
    scale: f64,
) -> (f64, Vec<SampleGrad>) {
    let bg = opts.background;
    let Some(bins) = Bins::for_ray(field, ray, opts) else {
        let e: f64 = (0..3).map(|k| (bg[k] - target[k]).powi(2)).sum();
        return (e, Vec::new());
    };
    let delta = bins.delta;
    // forward: keep (trilinear, σ, c, w, T_{i+1})
    let mut fwd: Vec<(Trilinear, f64, [f64; 3], f64, f64)> = Vec::with_capacity(bins.n);
    let mut trans = 1.0f64;
    let mut rgb = [0.0f64; 3];
    for i in 0..bins.n {
        let p = ray.at(bins.t(i, opts, key));
        let Some(tri) = field.trilinear(&p) else { continue };
        let (sigma, c) = field.eval(&tri);
        let keep = (-sigma * delta).exp();
        let w = trans * (1.0 - keep);
        for k in 0..3 {
            rgb[k] += w * c[k];
        }
        trans *= keep;
        fwd.push((tri, sigma, c, w, trans));
    }
    let mut err = 0.0;
    let mut g = [0.0; 3];
    for k in 0..3 {
        let c = rgb[k] + trans * bg[k];
        let d = c - target[k];
        err += d * d;
        g[k] = 2.0 * scale * d;
    }
    // backward: S_i = Σ_{j>i} w_j c_j + T_N·bg
    let mut suffix = [trans * bg[0], trans * bg[1], trans * bg[2]];
    let mut out = Vec::with_capacity(fwd.len());
    for (tri, _sigma, c, w, t_next) in fwd.into_iter().rev() {
        let gc = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
        let gs = g[0] * suffix[0] + g[1] * suffix[1] + g[2] * suffix[2];
        out.push(SampleGrad {
            tri,
            d_sigma: delta * (t_next * gc - gs),
            d_color: [g[0] * w, g[1] * w, g[2] * w],
        });
        for k in 0..3 {
            suffix[k] += w * c[k];
        }
    }
    (err, out)
}

const SCATTER_CHUNK: usize = 256;

/// Photometric loss `mean(|C − target|²)` over rays and channels plus
/// `tv_weight` times the squared-difference total variation of density
/// (averaged over voxels), with its analytic gradient.
///
/// Per-ray work may run in parallel; contributions are summed in batch
/// order so the result is independent of the thread count.
pub fn loss_and_gradient(
    field: &RadianceField,
    batch: &RayBatch,
    opts: &RenderOptions,
    tv_weight: f64,
) -> (f64, FieldGradient) {
    let n = field.voxel_count();
    let mut grad = FieldGradient::zeros(n);
    let scale = 1.0 / (3.0 * batch.len().max(1) as f64);
    let mut sq = 0.0;
    let key = |i: usize| batch.keys.get(i).copied().unwrap_or(i as u64);

    for start in (0..batch.len()).step_by(SCATTER_CHUNK) {
        let end = (start + SCATTER_CHUNK).min(batch.len());
        let parts: Vec<(f64, Vec<SampleGrad>)> = (start..end)
            .into_par_iter()
            .map(|i| ray_backward(field, &batch.rays[i], &batch.targets[i], opts, key(i), scale))
            .collect();
        for (err, samples) in parts {
            sq += err;
            for s in samples {
                for k in 0..8 {
                    let w = s.tri.w[k];
                    let i = s.tri.idx[k];
                    grad.density[i] += w * s.d_sigma;
                    let gc = &mut grad.color[i];
                    gc[0] += w * s.d_color[0];
                    gc[1] += w * s.d_color[1];
                    gc[2] += w * s.d_color[2];
                }
            }
        }
    }
    let mut loss = sq * scale;
    if tv_weight > 0.0 {
        loss += total_variation(field, tv_weight, &mut grad.density);
    }
    (loss, grad)
}

fn total_variation(field: &RadianceField, weight: f64, grad: &mut [f64]) -> f64 {
    let [nx, ny, nz] = field.dims();
    let k = weight / field.voxel_count() as f64;
    let d = &field.density;
    let mut tv = 0.0;
    let mut pair = |a: usize, b: usize, grad: &mut [f64]| {
        let diff = d[b] as f64 - d[a] as f64;
        tv += diff * diff;
        grad[b] += 2.0 * k * diff;
        grad[a] -= 2.0 * k * diff;
    };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = field.index(x, y, z);
                if x + 1 < nx {
                    pair(i, i + 1, grad);
                }
                if y + 1 < ny {
                    pair(i, i + nx, grad);
                }
                if z + 1 < nz {
                    pair(i, i + nx * ny, grad);
                }
            }
        }
    }
    k * tv
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub rays_per_batch: usize,
    /// Adam step size for colors.
    pub learning_rate: f64,
    /// Adam step size for densities (1/m), which span a much larger range.
    pub density_learning_rate: f64,
    /// Step sizes decay exponentially to this fraction by the last iteration.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub tv_weight: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub render: RenderOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            rays_per_batch: 8192,
            learning_rate: 0.05,
            density_learning_rate: 2.0,
            final_lr_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            tv_weight: 1e-4,
            holdout_fraction: 0.1,
            seed: 0,
            render: RenderOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rays_per_batch == 0 {
            return Err("rays_per_batch must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.density_learning_rate > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err("final_lr_fraction must be in (0, 1]".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err("need 0 ≤ beta1, beta2 < 1 and epsilon > 0".into());
        }
        if self.tv_weight < 0.0 {
            return Err("tv_weight must be non-negative".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err("holdout_fraction must be in (0, 1)".into());
        }
        self.render.validate()
    }
}

/// Adam state for every field parameter; densities are projected onto
/// σ ≥ 0 and colors onto [0, 1] after each step.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    #[inline]
    fn update(&mut self, j: usize, g: f64, lr: f64, bc1: f64, bc2: f64) -> f64 {
        let m = self.beta1 * self.m[j] as f64 + (1.0 - self.beta1) * g;
        let v = self.beta2 * self.v[j] as f64 + (1.0 - self.beta2) * g * g;
        self.m[j] = m as f32;
        self.v[j] = v as f32;
        lr * (m / bc1) / ((v / bc2).sqrt() + self.eps)
    }

    pub fn step(&mut self, field: &mut RadianceField, grad: &FieldGradient, lr_density: f64, lr_color: f64) {
        let n = field.voxel_count();
        assert_eq!(self.m.len(), 4 * n, "optimizer sized for another field");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..n {
            let s = field.density[i];
            let mut g = grad.density[i];
            // clamped at zero: a push further down is dropped
            if s <= 0.0 && g > 0.0 {
                g = 0.0;
            }
            let d = self.update(i, g, lr_density, bc1, bc2);
            field.density[i] = (s as f64 - d).max(0.0) as f32;
            for k in 0..3 {
                let c = field.color[i][k];
                let mut g = grad.color[i][k];
                if (c <= 0.0 && g > 0.0) || (c >= 1.0 && g < 0.0) {
                    g = 0.0;
                }
                let d = self.update(n + 3 * i + k, g, lr_color, bc1, bc2);
                field.color[i][k] = (c as f64 - d).clamp(0.0, 1.0) as f32;
            }
        }
    }
}

/// A posed training image.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub image: RgbImage,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub loss_curve: Vec<f64>,
    pub initial_holdout_psnr: f64,
    pub holdout_psnr: f64,
    pub holdout_psnr_per_view: Vec<f64>,
    pub holdout_indices: Vec<usize>,
}

/// `k = max(1, round(fraction·n))` indices spread evenly over `0..n`.
pub fn holdout_indices(n: usize, fraction: f64) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    (0..k).map(|i| ((i as f64 + 0.5) * n as f64 / k as f64) as usize).collect()
}

fn holdout_psnr(
    field: &RadianceField,
    cam: &CameraModel,
    views: &[TrainView],
    holdout: &[usize],
    opts: &RenderOptions,
) -> Result<(f64, Vec<f64>), FieldError> {
    let mut per = Vec::with_capacity(holdout.len());
    let mut mse_sum = 0.0;
    for &i in holdout {
        let r = render_image(field, cam, &views[i].pose, opts);
        let p = psnr(&r.rgb, &views[i].image)?;
        per.push(p);
        mse_sum += 10f64.powf(-p / 10.0);
    }
    let mean_mse = mse_sum / holdout.len().max(1) as f64;
    Ok((super::psnr_from_mse(mean_mse), per))
}

/// Fits the field to posed images with Adam.
///
/// `holdout` selects views that are never trained on and are used for the
/// reported PSNR (pooled MSE); `None` derives them from
/// `cfg.holdout_fraction`.
pub fn train(
    field: &mut RadianceField,
    cam: &CameraModel,
    views: &[TrainView],
    holdout: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<TrainReport, FieldError> {
    cfg.validate().map_err(FieldError::Invalid)?;
    if views.len() < 2 {
        return Err(FieldError::EmptyDataset);
    }
    for v in views {
        if v.image.width != cam.width as usize || v.image.height != cam.height as usize {
            return Err(FieldError::Invalid("training image does not match camera".into()));
        }
    }
    let c0 = views[0].pose.center();
    if views.iter().all(|v| (v.pose.center() - c0).norm() < 1e-9) {
        return Err(FieldError::DegenerateBounds);
    }
    let holdout: Vec<usize> = match holdout {
        Some(h) => h.to_vec(),
        None => holdout_indices(views.len(), cfg.holdout_fraction),
    };
    if holdout.iter().any(|&i| i >= views.len()) {
        return Err(FieldError::Invalid("holdout index out of range".into()));
    }
    let train_ids: Vec<usize> = (0..views.len()).filter(|i| !holdout.contains(i)).collect();
    if train_ids.is_empty() {
        return Err(FieldError::EmptyDataset);
    }

    let (initial_psnr, _) = holdout_psnr(field, cam, views, &holdout, &cfg.render)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(4 * field.voxel_count(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let px_per_view = cam.pixel_count();
    let total_px = train_ids.len() * px_per_view;
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    let mut key = 0u64;

    for it in 0..cfg.iterations {
        let mut batch = RayBatch::default();
        for _ in 0..cfg.rays_per_batch {
            let j = rng.random_range(0..total_px);
            let view = &views[train_ids[j / px_per_view]];
            let p = j % px_per_view;
            let (x, y) = (p % cam.width as usize, p / cam.width as usize);
            let ray = cam.ray_unchecked(&view.pose, x as f64, y as f64);
            let t = view.image.get(x, y).map(|v| v as f64);
            batch.push(ray, t, key);
            key += 1;
        }
        let (loss, grad) = loss_and_gradient(field, &batch, &cfg.render, cfg.tv_weight);
        loss_curve.push(loss);
        let decay = cfg.final_lr_fraction.powf(it as f64 / cfg.iterations.max(1) as f64);
        adam.step(field, &grad, cfg.density_learning_rate * decay, cfg.learning_rate * decay);
    }

    let (final_psnr, per) = holdout_psnr(field, cam, views, &holdout, &cfg.render)?;
    Ok(TrainReport {
        iterations: cfg.iterations,
        loss_curve,
        initial_holdout_psnr: initial_psnr,
        holdout_psnr: final_psnr,
        holdout_psnr_per_view: per,
        holdout_indices: holdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::field::render_ray;

    fn random_field(seed: u64) -> RadianceField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8 * 8 * 8;
        RadianceField::from_parts(
            [-1.0; 3],
            [1.0; 3],
            [8, 8, 8],
            (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
            (0..n).map(|_| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)]).collect(),
        )
        .unwrap()
    }

    fn opts() -> RenderOptions {
        RenderOptions {
            samples_per_ray: 32,
            t_near: 0.1,
            t_far: 8.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_residual_gives_zero_photometric_gradient() {
        let f = random_field(1);
        let mut batch = RayBatch::default();
        for i in 0..8 {
            let ray = Ray::new(Vec3::new(-3.0, 0.1 * i as f64, 0.2), Vec3::new(1.0, -0.05, 0.03 * i as f64));
            let c = render_ray(&f, &ray, &opts()).rgb;
            batch.push(ray, c, i);
        }
        let (loss, g) = loss_and_gradient(&f, &batch, &opts(), 0.0);
        assert!(loss < 1e-20);
        assert!(g.density.iter().all(|v| v.abs() < 1e-12));
        assert!(g.color.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn vacuum_ray_touches_only_its_voxels() {
        let f = RadianceField::new([-1.0; 3], [1.0; 3], [8, 8, 8], 0.0, [0.5; 3]).unwrap();
        let ray = Ray::new(Vec3::new(-3.0, 0.51, 0.37), Vec3::x());
        let mut batch = RayBatch::default();
        batch.push(ray, [0.2, 0.3, 0.4], 0);
        let (_, g) = loss_and_gradient(&f, &batch, &opts(), 0.0);
        // the ray runs along x at fixed (y, z): lattice coords y, z between
        // cells 5/6 and 4/5 respectively
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let i = f.index(x, y, z);
                    let touched = (5..=6).contains(&y) && (4..=5).contains(&z);
                    if !touched {
                        assert_eq!(g.density[i], 0.0);
                        assert_eq!(g.color[i], [0.0; 3]);
                    }
                }
            }
        }
        assert!(g.density.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn holdout_layout() {
        assert_eq!(holdout_indices(10, 0.1), vec![5]);
        assert_eq!(holdout_indices(50, 0.1), vec![5, 15, 25, 35, 45]);
        assert_eq!(holdout_indices(2, 0.9), vec![1]);
        assert!(holdout_indices(1, 0.5).is_empty());
    }

    #[test]
    fn training_errors() {
        let mut f = random_field(2);
        let cam = CameraModel::from_hfov(8, 6, 1.0).unwrap();
        let img = RgbImage::new(8, 6);
        let one = vec![TrainView { image: img.clone(), pose: Pose::identity() }];
        assert!(matches!(train(&mut f, &cam, &one, None, &TrainConfig::default()), Err(FieldError::EmptyDataset)));
        let same = vec![one[0].clone(), one[0].clone()];
        assert!(matches!(train(&mut f, &cam, &same, None, &TrainConfig::default()), Err(FieldError::DegenerateBounds)));
    }

    #[test]
    fn zero_iterations_leave_field_unchanged() {
        let mut f = random_field(3);
        let before = f.clone();
        let cam = CameraModel::from_hfov(8, 6, 1.0).unwrap();
        let views: Vec<_> = (0..4)
            .map(|i| TrainView {
                image: RgbImage::filled(8, 6, [0.5; 3]),
                pose: Pose::look_at(Vec3::new(-3.0, 0.3 * i as f64, 0.0), Vec3::zeros(), Vec3::z()).unwrap(),
            })
            .collect();
        let cfg = TrainConfig { iterations: 0, render: opts(), ..Default::default() };
        let r = train(&mut f, &cam, &views, None, &cfg).unwrap();
        assert_eq!(f, before);
        assert_eq!(r.initial_holdout_psnr, r.holdout_psnr);
        assert!(r.loss_curve.is_empty());
    }
}
