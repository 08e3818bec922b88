use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RadianceField;
use crate::geom::{CameraModel, Pose, Ray};
use crate::image::{GrayImage, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    pub samples_per_ray: usize,
    pub t_near: f64,
    pub t_far: f64,
    pub background: [f64; 3],
    pub stratified_jitter: bool,
    pub seed: u64,
    /// Pixels whose opacity is below this get depth 0 (undefined) in
    /// rendered depth images.
    pub min_depth_opacity: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            samples_per_ray: 128,
            t_near: 0.05,
            t_far: 20.0,
            background: [1.0, 1.0, 1.0],
            stratified_jitter: false,
            seed: 0,
            min_depth_opacity: 0.5,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples_per_ray < 2 {
            return Err("samples_per_ray must be at least 2".into());
        }
        if !(self.t_near > 0.0 && self.t_far > self.t_near) {
            return Err("need 0 < t_near < t_far".into());
        }
        Ok(())
    }
}

/// Result of integrating one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRender {
    pub rgb: [f64; 3],
    /// Expected termination distance, 0 when the opacity is below 1e-6.
    pub depth: f64,
    /// Σ wᵢ.
    pub opacity: f64,
    /// Transmittance left after the last sample.
    pub transmittance: f64,
}

/// Color, depth and opacity images of one view. Depth is camera-frame z
/// (0 where undefined), whereas [`RayRender::depth`] is distance along the ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub rgb: RgbImage,
    pub depth: GrayImage,
    pub opacity: GrayImage,
}

/// Sample layout along a ray: `n` bins of width `delta` starting at `start`.
/// Every sample stands for its whole bin, so Σδ equals the marched length.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bins {
    pub start: f64,
    pub delta: f64,
    pub n: usize,
}

impl Bins {
    /// The `[t_near, t_far]` interval clipped to the field's bounding box.
    pub fn for_ray(field: &RadianceField, ray: &Ray, opts: &RenderOptions) -> Option<Bins> {
        let (a, b) = field.clip(&ray.origin, &ray.direction)?;
        let a = a.max(opts.t_near);
        let b = b.min(opts.t_far);
        (b > a).then(|| Bins {
            start: a,
            delta: (b - a) / opts.samples_per_ray as f64,
            n: opts.samples_per_ray,
        })
    }

    #[inline]
    pub fn t(&self, i: usize, opts: &RenderOptions, key: u64) -> f64 {
        let u = if opts.stratified_jitter {
            unit_hash(opts.seed, key, i as u64)
        } else {
            0.5
        };
        self.start + (i as f64 + u) * self.delta
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic uniform value in [0, 1) for (seed, ray key, sample index).
fn unit_hash(seed: u64, key: u64, i: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ key) ^ i);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Emission-absorption quadrature along one ray.
pub fn render_ray(field: &RadianceField, ray: &Ray, opts: &RenderOptions) -> RayRender {
    render_ray_keyed(field, ray, opts, 0)
}

pub(crate) fn render_ray_keyed(field: &RadianceField, ray: &Ray, opts: &RenderOptions, key: u64) -> RayRender {
    let Some(bins) = Bins::for_ray(field, ray, opts) else {
        return RayRender {
            rgb: opts.background,
            depth: 0.0,
            opacity: 0.0,
            transmittance: 1.0,
        };
    };
    let mut trans = 1.0f64;
    let mut rgb = [0.0f64; 3];
    let mut wsum = 0.0;
    let mut wt = 0.0;
    for i in 0..bins.n {
        let t = bins.t(i, opts, key);
        let (sigma, c) = field.sample(&ray.at(t));
        if sigma <= 0.0 {
            continue;
        }
        let alpha = 1.0 - (-sigma * bins.delta).exp();
        let w = trans * alpha;
        rgb[0] += w * c[0];
        rgb[1] += w * c[1];
        rgb[2] += w * c[2];
        wsum += w;
        wt += w * t;
        trans *= 1.0 - alpha;
    }
    for (k, v) in rgb.iter_mut().enumerate() {
        *v += trans * opts.background[k];
    }
    RayRender {
        rgb,
        depth: if wsum < 1e-6 { 0.0 } else { wt / wsum },
        opacity: wsum.min(1.0),
        transmittance: trans,
    }
}

/// Renders every pixel of `cam` from `pose`. Rows are processed in parallel;
/// the output does not depend on the number of worker threads.
pub fn render_image(field: &RadianceField, cam: &CameraModel, pose: &Pose, opts: &RenderOptions) -> RenderedView {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let rows: Vec<Vec<RayRender>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = cam.ray_unchecked(pose, x as f64, y as f64);
                    let mut r = render_ray_keyed(field, &ray, opts, (y * w + x) as u64);
                    // distance along the unit ray to camera-frame z
                    let (u, v) = ((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy);
                    r.depth /= (1.0 + u * u + v * v).sqrt();
                    r
                })
                .collect()
        })
        .collect();
    let mut rgb = RgbImage::new(w, h);
    let mut depth = GrayImage::new(w, h);
    let mut opacity = GrayImage::new(w, h);
    for (y, row) in rows.iter().enumerate() {
        for (x, r) in row.iter().enumerate() {
            rgb.set(x, y, r.rgb.map(|v| v as f32));
            opacity.set(x, y, r.opacity as f32);
            if r.opacity >= opts.min_depth_opacity && r.depth > 0.0 {
                depth.set(x, y, r.depth as f32);
            }
        }
    }
    RenderedView { rgb, depth, opacity }
}

/// Vacuum everywhere except a slab `[z0, z1]` (world z) of density `sigma`.
#[cfg(test)]
pub(crate) fn slab_field(z0: f64, z1: f64, sigma: f32, dims: usize) -> RadianceField {
    let mut f = RadianceField::new([-1.0, -1.0, 0.0], [1.0, 1.0, 10.0], [2, 2, dims], 0.0, [0.5; 3]).unwrap();
    for z in 0..dims {
        let c = f.voxel_center(0, 0, z).z;
        if c >= z0 && c <= z1 {
            for y in 0..2 {
                for x in 0..2 {
                    let i = f.index(x, y, z);
                    f.set_voxel(i, sigma, [0.2, 0.4, 0.6]);
                }
            }
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn opts(n: usize) -> RenderOptions {
        RenderOptions {
            samples_per_ray: n,
            t_near: 0.5,
            t_far: 9.5,
            ..Default::default()
        }
    }

    #[test]
    fn vacuum_renders_background() {
        let f = RadianceField::new([-1.0; 3], [1.0; 3], [4, 4, 4], 0.0, [0.3; 3]).unwrap();
        let r = render_ray(&f, &Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::z()), &opts(64));
        assert_eq!(r.rgb, [1.0; 3]);
        assert_eq!(r.opacity, 0.0);
        assert_eq!(r.depth, 0.0);
        let cam = CameraModel::from_hfov(16, 12, 1.0).unwrap();
        let view = render_image(&f, &cam, &Pose::identity(), &opts(16));
        assert!(view.rgb.data.iter().all(|v| *v == 1.0));
        assert!(view.depth.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let sigma = 0.3f32;
        let f = RadianceField::new([-1.0, -1.0, 0.0], [1.0, 1.0, 10.0], [2, 2, 8], sigma, [0.5; 3]).unwrap();
        let o = RenderOptions {
            stratified_jitter: true,
            seed: 7,
            ..opts(128)
        };
        let r = render_ray(&f, &Ray::new(Vec3::zeros(), Vec3::z()), &o);
        let want = 1.0 - (-(sigma as f64) * (o.t_far - o.t_near)).exp();
        assert!((r.opacity - want).abs() / want < 0.02, "{} vs {want}", r.opacity);
        assert!((r.opacity + r.transmittance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn opaque_slab_depth() {
        let f = slab_field(4.0, 6.0, 500.0, 100);
        let o = opts(256);
        let r = render_ray(&f, &Ray::new(Vec3::zeros(), Vec3::z()), &o);
        // slab front face: interpolated density rises across the last half
        // voxel before the first occupied center
        let spacing = (o.t_far - o.t_near) / o.samples_per_ray as f64;
        let face = f.voxel_center(0, 0, 40).z;
        assert!(r.opacity > 0.999);
        assert!((r.depth - face).abs() <= spacing + 0.05, "depth {} face {face}", r.depth);
        assert!(r.depth >= o.t_near && r.depth <= o.t_far);
    }

    #[test]
    fn depth_image_is_camera_z() {
        // slab face is the plane z = const facing an identity camera
        let f = slab_field(4.0, 6.0, 500.0, 100);
        let cam = CameraModel::from_hfov(21, 15, 0.4).unwrap();
        let view = render_image(&f, &cam, &Pose::identity(), &opts(256));
        let center = view.depth.get(10, 7);
        assert!(center > 3.8 && center < 4.1, "{center}");
        for v in &view.depth.data {
            assert!((v - center).abs() < 0.03, "{v} vs {center}");
        }
    }

    #[test]
    fn renders_are_reproducible_across_thread_counts() {
        let f = slab_field(2.0, 3.0, 5.0, 20);
        let cam = CameraModel::from_hfov(24, 16, 1.2).unwrap();
        let pose = Pose::from_translation(Vec3::new(0.1, 0.0, -1.0));
        let o = RenderOptions {
            stratified_jitter: true,
            ..opts(32)
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| render_image(&f, &cam, &pose, &o));
        let b = three.install(|| render_image(&f, &cam, &pose, &o));
        assert_eq!(a, b);
    }

    fn random_field(seed: u64) -> RadianceField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = [6, 5, 7];
        let n = 6 * 5 * 7;
        let d = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let c = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        RadianceField::from_parts([-1.0; 3], [1.0; 3], dims, d, c).unwrap()
    }

    proptest! {
        #[test]
        fn weights_and_transmittance_sum_to_one(seed in 0u64..1000, dir in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(Vec3::from(dir).norm() > 0.1);
            let f = random_field(seed % 7);
            let ray = Ray::new(-2.5 * Vec3::from(dir).normalize(), Vec3::from(dir));
            let r = render_ray(&f, &ray, &RenderOptions { t_near: 0.1, t_far: 6.0, ..opts(64) });
            prop_assert!((r.opacity + r.transmittance - 1.0).abs() < 1e-6);
            prop_assert!((0.0..=1.0).contains(&r.opacity));
        }

        #[test]
        fn opacity_is_monotone_in_density(seed in 0u64..200, bump in 0.0f32..50.0) {
            let mut f = random_field(seed);
            let ray = Ray::new(Vec3::new(0.05, -0.1, -3.0), Vec3::new(0.02, 0.05, 1.0));
            let o = RenderOptions { t_near: 0.1, t_far: 6.0, ..opts(48) };
            let before = render_ray(&f, &ray, &o).opacity;
            let i = (seed as usize * 31) % f.voxel_count();
            let (d, c) = (f.density[i] + bump, f.color[i]);
            f.set_voxel(i, d, c);
            prop_assert!(render_ray(&f, &ray, &o).opacity >= before - 1e-12);
        }
    }
}
