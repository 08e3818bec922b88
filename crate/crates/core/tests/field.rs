use fieldloc::field::{loss_and_gradient, render_image, render_ray, RayBatch};
use fieldloc::geom::Vec3;
use fieldloc::{CameraModel, Pose, RadianceField, Ray, RenderOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> RadianceField {
    let count = n * n * n;
    let density = (0..count).map(|_| rng.random_range(0.5f32..4.0)).collect();
    let color = (0..count)
        .map(|_| [rng.random_range(0.1f32..0.9), rng.random_range(0.1f32..0.9), rng.random_range(0.1f32..0.9)])
        .collect();
    RadianceField::from_parts([-1.0; 3], [1.0; 3], [n; 3], density, color).unwrap()
}

fn random_ray(rng: &mut ChaCha8Rng) -> Ray {
    let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let origin = 3.0 * d.try_normalize(1e-9).unwrap_or(Vec3::z());
    let target = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    Ray::new(origin, target - origin)
}

fn with_param(field: &RadianceField, param: usize, value: f32) -> RadianceField {
    let mut density = field.density().to_vec();
    let mut color = field.color().to_vec();
    let n = field.voxel_count();
    if param < n {
        density[param] = value;
    } else {
        color[(param - n) / 3][(param - n) % 3] = value;
    }
    RadianceField::from_parts(field.bbox_min(), field.bbox_max(), field.dims(), density, color).unwrap()
}

fn param_value(field: &RadianceField, param: usize) -> f32 {
    let n = field.voxel_count();
    if param < n {
        field.density()[param]
    } else {
        field.color()[(param - n) / 3][(param - n) % 3]
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over `checks` parameters that the batch actually touches.
fn gradient_check(seed: u64, checks: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = random_field(&mut rng, 8);
    let mut batch = RayBatch::default();
    for k in 0..32 {
        let ray = random_ray(&mut rng);
        batch.push(ray, [rng.random(), rng.random(), rng.random()], k);
    }
    let opts = RenderOptions {
        samples_per_ray: 64,
        ..Default::default()
    };
    let tv = 1e-3;
    let (_, grad) = loss_and_gradient(&field, &batch, &opts, tv);
    let n = field.voxel_count();
    let analytic = |p: usize| if p < n { grad.density[p] } else { grad.color[(p - n) / 3][(p - n) % 3] };
    let touched: Vec<usize> = (0..4 * n).filter(|&p| analytic(p).abs() > 1e-7).collect();
    assert!(touched.len() >= checks, "batch touches only {} parameters", touched.len());

    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..checks {
        let p = touched[rng.random_range(0..touched.len())];
        let v = param_value(&field, p) as f64;
        let (plus, minus) = ((v + h) as f32, (v - h) as f32);
        let (lp, _) = loss_and_gradient(&with_param(&field, p, plus), &batch, &opts, tv);
        let (lm, _) = loss_and_gradient(&with_param(&field, p, minus), &batch, &opts, tv);
        let numeric = (lp - lm) / (plus as f64 - minus as f64);
        let a = analytic(p);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let worst = gradient_check(7, 10);
    assert!(worst < 1e-3, "max relative error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gradient_check_holds_for_any_seed(seed in any::<u64>()) {
        let worst = gradient_check(seed, 10);
        prop_assert!(worst < 1e-3, "max relative error {}", worst);
    }

    #[test]
    fn weights_and_transmittance_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_field(&mut rng, 6);
        let opts = RenderOptions { stratified_jitter: true, seed, ..Default::default() };
        for _ in 0..200 {
            let r = render_ray(&field, &random_ray(&mut rng), &opts);
            prop_assert!((r.opacity + r.transmittance - 1.0).abs() < 1e-6);
            prop_assert!((0.0..=1.0).contains(&r.opacity));
            if r.depth > 0.0 {
                prop_assert!(r.depth >= opts.t_near && r.depth <= opts.t_far);
            }
        }
    }

    #[test]
    fn denser_voxel_never_lowers_opacity(seed in any::<u64>(), voxel in 0usize..216, bump in 0.01f32..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_field(&mut rng, 6);
        let denser = with_param(&field, voxel, field.density()[voxel] + bump);
        let opts = RenderOptions::default();
        for _ in 0..50 {
            let ray = random_ray(&mut rng);
            let a = render_ray(&field, &ray, &opts).opacity;
            let b = render_ray(&denser, &ray, &opts).opacity;
            prop_assert!(b >= a - 1e-12, "{} < {}", b, a);
        }
    }
}

#[test]
fn homogeneous_medium_matches_beer_lambert() {
    for sigma in [0.05f32, 0.3, 1.0, 4.0] {
        let field = RadianceField::new([-50.0; 3], [50.0; 3], [4; 3], sigma, [0.5; 3]).unwrap();
        let opts = RenderOptions::default();
        let r = render_ray(&field, &Ray::new(Vec3::zeros(), Vec3::new(0.3, -0.2, 1.0)), &opts);
        let expected = 1.0 - (-(sigma as f64) * (opts.t_far - opts.t_near)).exp();
        assert!((r.opacity - expected).abs() <= 0.02 * expected, "σ={sigma}: {} vs {expected}", r.opacity);
    }
}

#[test]
fn opaque_slab_depth_within_one_sample() {
    let d = 3.0;
    let mut field = RadianceField::new([-1.0, -1.0, 0.0], [1.0, 1.0, 8.0], [2, 2, 80], 0.0, [0.5; 3]).unwrap();
    for z in 0..80 {
        if field.voxel_center(0, 0, z).z >= d {
            for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let i = field.index(x, y, z);
                field.set_voxel(i, 500.0, [0.2; 3]);
            }
        }
    }
    let opts = RenderOptions::default();
    let r = render_ray(&field, &Ray::new(Vec3::new(0.0, 0.0, 0.0), Vec3::z()), &opts);
    let spacing = (8.0 - opts.t_near) / opts.samples_per_ray as f64;
    assert!((r.depth - d).abs() <= spacing + 0.1, "depth {}", r.depth);
}

#[test]
fn rendering_is_identical_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let field = random_field(&mut rng, 8);
    let cam = CameraModel::from_hfov(40, 30, 60f64.to_radians()).unwrap();
    let pose = Pose::look_at(Vec3::new(2.5, 1.0, 1.5), Vec3::zeros(), Vec3::z()).unwrap();
    let opts = RenderOptions {
        stratified_jitter: true,
        seed: 11,
        ..Default::default()
    };
    let render = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render_image(&field, &cam, &pose, &opts))
    };
    assert_eq!(render(1), render(3));
}
