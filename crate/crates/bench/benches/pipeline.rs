use criterion::{criterion_group, criterion_main, Criterion};
use fieldloc::features::{detect_keypoints, FastOptions};
use fieldloc::field::{render_image, RenderOptions};
use fieldloc::geom::{Vec2, Vec3};
use fieldloc::localize::{solve_pnp_ransac, Correspondence, RansacOptions};
use fieldloc::synth::{default_scene, voxelize_scene};
use fieldloc::{CameraModel, Pose};
use rand::{Rng, SeedableRng};

fn bench(c: &mut Criterion) {
    let field = voxelize_scene(&default_scene(), [64; 3], None).unwrap();
    let cam = CameraModel::from_hfov(320, 240, 60f64.to_radians()).unwrap();
    let pose = Pose::look_at(Vec3::new(4.0, 0.5, 1.8), Vec3::new(0.0, 0.0, 0.4), Vec3::z()).unwrap();
    let opts = RenderOptions::default();
    c.bench_function("render_320x240", |b| b.iter(|| render_image(&field, &cam, &pose, &opts)));

    let gray = render_image(&field, &cam, &pose, &opts).rgb.to_gray();
    c.bench_function("fast_320x240", |b| b.iter(|| detect_keypoints(&gray, &FastOptions::default()).unwrap()));

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let corr: Vec<Correspondence> = (0..300)
        .map(|i| {
            let px = Vec2::new(rng.random_range(0.0..319.0), rng.random_range(0.0..239.0));
            let world = pose.transform_point(&cam.unproject(&px, rng.random_range(2.0..6.0)).unwrap());
            let pixel = if i % 4 == 0 { Vec2::new(rng.random_range(0.0..319.0), rng.random_range(0.0..239.0)) } else { px };
            Correspondence { world, pixel }
        })
        .collect();
    c.bench_function("pnp_ransac_300", |b| {
        b.iter(|| solve_pnp_ransac(&corr, &cam, &RansacOptions::default(), 10).unwrap())
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);
