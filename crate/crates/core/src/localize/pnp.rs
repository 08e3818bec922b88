use nalgebra::{Matrix6, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::p3p::p3p;
use super::{Correspondence, LocalizeError};
use crate::geom::{CameraModel, Mat3, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacOptions {
    pub iterations: usize,
    pub inlier_threshold_px: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold_px: 3.0,
            min_inliers: 12,
            seed: 0,
        }
    }
}

impl RansacOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.iterations == 0 {
            return Err("ransac.iterations must be positive".into());
        }
        if !(self.inlier_threshold_px > 0.0) {
            return Err("ransac.inlier_threshold_px must be positive".into());
        }
        Ok(())
    }
}

/// Output of [`solve_pnp_ransac`].
#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    /// Camera-to-world.
    pub pose: Pose,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// Mean reprojection error over the inliers, pixels.
    pub mean_error: f64,
}

/// Reprojection error in pixels, `None` behind the camera.
pub fn reprojection_error(cam: &CameraModel, world_to_cam: &Pose, c: &Correspondence) -> Option<f64> {
    let p = world_to_cam.transform_point(&c.world);
    let px = cam.project(&p).ok()?;
    Some((px - c.pixel).norm())
}

fn score(cam: &CameraModel, w2c: &Pose, corr: &[Correspondence], thr: f64) -> (usize, f64) {
    let mut n = 0;
    let mut sum = 0.0;
    for c in corr {
        if let Some(e) = reprojection_error(cam, w2c, c) {
            if e <= thr {
                n += 1;
                sum += e;
            }
        }
    }
    (n, if n > 0 { sum / n as f64 } else { f64::INFINITY })
}

/// Mean reprojection error over `corr`; points behind the camera count as
/// infinite.
pub fn mean_reprojection_error(cam: &CameraModel, w2c: &Pose, corr: &[Correspondence]) -> f64 {
    if corr.is_empty() {
        return 0.0;
    }
    corr.iter()
        .map(|c| reprojection_error(cam, w2c, c).unwrap_or(f64::INFINITY))
        .sum::<f64>()
        / corr.len() as f64
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gauss-Newton on the world-to-camera transform over `corr`. Each step
/// left-multiplies a rotation-vector increment and adds a translation
/// increment; a step is halved (up to 10 times) until the mean reprojection
/// error does not increase, so the error is monotone.
pub fn refine_pose(cam: &CameraModel, w2c: &Pose, corr: &[Correspondence], iterations: usize) -> Pose {
    let mut cur = *w2c;
    let mut err = mean_reprojection_error(cam, &cur, corr);
    for _ in 0..iterations {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let rm = cur.rotation_matrix();
        for c in corr {
            let rp = rm * c.world;
            let p = rp + cur.translation;
            if p.z <= 1e-9 {
                continue;
            }
            let Ok(px) = cam.project(&p) else { continue };
            let r = px - c.pixel;
            let iz = 1.0 / p.z;
            let dproj = nalgebra::Matrix2x3::new(
                cam.fx * iz,
                0.0,
                -cam.fx * p.x * iz * iz,
                0.0,
                cam.fy * iz,
                -cam.fy * p.y * iz * iz,
            );
            let mut dp = nalgebra::Matrix3x6::<f64>::zeros();
            dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&rp)));
            dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
            let j = dproj * dp;
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let Some(delta) = h.cholesky().map(|ch| ch.solve(&(-g))) else { break };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=10 {
            let d = delta * step;
            let cand = cur.perturbed(&Vec3::new(d[0], d[1], d[2]), &Vec3::new(d[3], d[4], d[5]));
            let e = mean_reprojection_error(cam, &cand, corr);
            if e <= err {
                accepted = e < err;
                cur = cand;
                err = e;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    cur
}

/// P3P inside RANSAC: each hypothesis comes from three correspondences and
/// a fourth picks among the P3P roots. The best hypothesis (most inliers,
/// then lowest mean inlier error) is refined on its inliers with
/// [`refine_pose`]; inliers are then re-selected against the refined pose.
pub fn solve_pnp_ransac(
    corr: &[Correspondence],
    cam: &CameraModel,
    opts: &RansacOptions,
    refine_iterations: usize,
) -> Result<PnpSolution, LocalizeError> {
    let n = corr.len();
    if n < 4 {
        return Err(LocalizeError::InsufficientCorrespondences(n));
    }
    let bearings: Vec<Vec3> = corr
        .iter()
        .map(|c| Vec3::new((c.pixel.x - cam.cx) / cam.fx, (c.pixel.y - cam.cy) / cam.fy, 1.0).normalize())
        .collect();
    let thr = opts.inlier_threshold_px;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(usize, f64, Pose)> = None;
    let mut degenerate = 0;
    for _ in 0..opts.iterations {
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let (i0, i1, i2, i3) = (idx.index(0), idx.index(1), idx.index(2), idx.index(3));
        let w = [corr[i0].world, corr[i1].world, corr[i2].world];
        let extent = (w[1] - w[0]).norm().max((w[2] - w[0]).norm());
        if (w[1] - w[0]).cross(&(w[2] - w[0])).norm() <= 1e-9 * extent * extent {
            degenerate += 1;
            continue;
        }
        let sols = p3p(&w, &[bearings[i0], bearings[i1], bearings[i2]]);
        let check = &corr[i3];
        let Some(pose) = sols
            .iter()
            .map(|p| {
                let w2c = p.inverse();
                (reprojection_error(cam, &w2c, check).unwrap_or(f64::INFINITY), w2c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p)
        else {
            continue;
        };
        let (count, mean) = score(cam, &pose, corr, thr);
        let better = match &best {
            None => count > 0,
            Some((bc, bm, _)) => count > *bc || (count == *bc && mean < *bm),
        };
        if better {
            best = Some((count, mean, pose));
        }
    }
    if degenerate == opts.iterations {
        return Err(LocalizeError::Degenerate);
    }
    let Some((count, _, mut w2c)) = best else {
        return Err(LocalizeError::NoConsensus { best: 0, needed: opts.min_inliers });
    };
    if count < opts.min_inliers.max(4) {
        return Err(LocalizeError::NoConsensus { best: count, needed: opts.min_inliers });
    }
    let mask_for = |p: &Pose| -> Vec<bool> {
        corr.iter()
            .map(|c| reprojection_error(cam, p, c).is_some_and(|e| e <= thr))
            .collect()
    };
    let mut mask = mask_for(&w2c);
    for _ in 0..3 {
        let inl: Vec<Correspondence> = corr.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
        w2c = refine_pose(cam, &w2c, &inl, refine_iterations);
        let next = mask_for(&w2c);
        if next == mask {
            break;
        }
        mask = next;
    }
    let inl: Vec<Correspondence> = corr.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    let inlier_count = inl.len();
    if inlier_count < opts.min_inliers.max(4) {
        return Err(LocalizeError::NoConsensus { best: inlier_count, needed: opts.min_inliers });
    }
    Ok(PnpSolution {
        pose: w2c.inverse(),
        mean_error: mean_reprojection_error(cam, &w2c, &inl),
        inliers: mask,
        inlier_count,
    })
}

/// Noise-free correspondences of `n` random points seen by `cam` at `pose`.
#[cfg(test)]
pub(crate) fn synthetic(cam: &CameraModel, pose: &Pose, n: usize, seed: u64) -> Vec<Correspondence> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let px = crate::geom::Vec2::new(
                rng.random_range(0.0..cam.width as f64 - 1.0),
                rng.random_range(0.0..cam.height as f64 - 1.0),
            );
            let d = rng.random_range(2.0..8.0);
            let p = cam.unproject(&px, d).unwrap();
            Correspondence {
                world: pose.transform_point(&p),
                pixel: px,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error, Vec2};
    use proptest::prelude::*;
    use rand::Rng;

    fn cam() -> CameraModel {
        CameraModel::from_hfov(320, 240, 1.05).unwrap()
    }

    fn pose() -> Pose {
        Pose::from_wxyz(0.8, 0.2, -0.3, 0.1, Vec3::new(0.5, -1.0, 2.0))
    }

    #[test]
    fn exact_recovery() {
        let c = synthetic(&cam(), &pose(), 50, 1);
        let sol = solve_pnp_ransac(&c, &cam(), &RansacOptions::default(), 10).unwrap();
        assert!((sol.pose.center() - pose().center()).norm() < 1e-6);
        assert!(rotation_error(&sol.pose, &pose()) < 1e-8);
        assert_eq!(sol.inlier_count, 50);
    }

    #[test]
    fn labeled_outliers() {
        let cam = cam();
        let mut c = synthetic(&cam, &pose(), 200, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut truth = vec![true; 200];
        for k in 0..60 {
            let i = k * 3 + 1;
            c[i].pixel = Vec2::new(rng.random_range(0.0..319.0), rng.random_range(0.0..239.0));
            truth[i] = false;
        }
        let opts = RansacOptions { iterations: 500, ..Default::default() };
        let sol = solve_pnp_ransac(&c, &cam, &opts, 10).unwrap();
        assert!((sol.pose.center() - pose().center()).norm() < 1e-4);
        assert_eq!(sol.inliers, truth);
    }

    #[test]
    fn error_cases() {
        let c = synthetic(&cam(), &pose(), 3, 4);
        assert_eq!(
            solve_pnp_ransac(&c, &cam(), &RansacOptions::default(), 10),
            Err(LocalizeError::InsufficientCorrespondences(3))
        );
        // all world points on one line
        let line: Vec<Correspondence> = (0..10)
            .map(|i| Correspondence {
                world: Vec3::new(i as f64 * 0.1, 0.0, 4.0),
                pixel: Vec2::new(100.0 + i as f64, 100.0),
            })
            .collect();
        assert_eq!(
            solve_pnp_ransac(&line, &cam(), &RansacOptions { iterations: 50, ..Default::default() }, 10),
            Err(LocalizeError::Degenerate)
        );
        let few = synthetic(&cam(), &pose(), 8, 5);
        assert!(matches!(
            solve_pnp_ransac(&few, &cam(), &RansacOptions::default(), 10),
            Err(LocalizeError::NoConsensus { best: 8, needed: 12 })
        ));
    }

    #[test]
    fn refinement_is_monotone_under_noise() {
        let cam = cam();
        let mut c = synthetic(&cam, &pose(), 80, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for x in &mut c {
            x.pixel += Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let start = pose().perturbed(&Vec3::new(0.01, -0.02, 0.01), &Vec3::new(0.05, 0.02, -0.03)).inverse();
        let mut prev = mean_reprojection_error(&cam, &start, &c);
        let mut cur = start;
        for _ in 0..5 {
            cur = refine_pose(&cam, &cur, &c, 1);
            let e = mean_reprojection_error(&cam, &cur, &c);
            assert!(e <= prev);
            prev = e;
        }
        assert!(prev < 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariant_to_world_frame_change(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0, seed in 0u64..100,
        ) {
            let cam = cam();
            let c = synthetic(&cam, &pose(), 40, seed);
            let g = Pose::new(nalgebra::UnitQuaternion::from_scaled_axis(Vec3::new(ax, ay, az)), Vec3::new(tx, ty, tz));
            let moved: Vec<_> = c.iter().map(|x| Correspondence { world: g.transform_point(&x.world), ..*x }).collect();
            let opts = RansacOptions { iterations: 100, ..Default::default() };
            let a = solve_pnp_ransac(&c, &cam, &opts, 10).unwrap();
            let b = solve_pnp_ransac(&moved, &cam, &opts, 10).unwrap();
            let expect = g.compose(&a.pose);
            prop_assert!((b.pose.center() - expect.center()).norm() < 1e-9);
            prop_assert!(rotation_error(&b.pose, &expect) < 1e-9);
            prop_assert_eq!(a.inliers, b.inliers);
        }
    }
}
