use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LocalizeError, RansacOptions};
use crate::features::{Keypoint, Match};
use crate::geom::{CameraModel, Mat3, Pose, Vec3};

/// Output of [`solve_two_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewSolution {
    /// Camera-to-world pose of the query.
    pub pose: Pose,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// Mean Sampson distance over the inliers, pixels.
    pub mean_error: f64,
    /// Derotated parallax too small to observe a translation direction.
    pub degenerate: bool,
}

fn normalized(cam: &CameraModel, k: &Keypoint) -> Vec3 {
    Vec3::new((k.x - cam.cx) / cam.fx, (k.y - cam.cy) / cam.fy, 1.0)
}

/// Similarity that moves the points' centroid to the origin with mean
/// distance √2.
fn conditioner(pts: &[&Vec3]) -> Mat3 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
    let md = pts.iter().map(|p| ((p.x - mx).powi(2) + (p.y - my).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if md > 1e-15 { std::f64::consts::SQRT_2 / md } else { 1.0 };
    Mat3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Normalized eight-point estimate of E with `q^T E r = 0`, projected onto
/// the essential manifold.
fn eight_point(q: &[&Vec3], r: &[&Vec3]) -> Option<Mat3> {
    let tq = conditioner(q);
    let tr = conditioner(r);
    let rows = q.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (x, y)) in q.iter().zip(r).enumerate() {
        let x = tq * **x;
        let y = tr * **y;
        for j in 0..3 {
            for k in 0..3 {
                a[(i, 3 * j + k)] = x[j] * y[k];
            }
        }
    }
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let e = Mat3::from_fn(|j, k| vt[(imin, 3 * j + k)]);
    let e = tq.transpose() * e * tr;
    let svd = SVD::new(e, true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let s = (svd.singular_values[0] + svd.singular_values[1]) / 2.0;
    if s <= 0.0 {
        return None;
    }
    // SVD ordering is descending in nalgebra
    Some(u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0)) * vt)
}

fn sampson(e: &Mat3, q: &Vec3, r: &Vec3) -> f64 {
    let er = e * r;
    let etq = e.transpose() * q;
    let num = q.dot(&er);
    let den = er.x * er.x + er.y * er.y + etq.x * etq.x + etq.y * etq.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    num * num / den
}

/// Depths (query, reference) of the point seen along `q` and `r` when
/// `X_q = R X_r + t`.
fn triangulate(rot: &Mat3, t: &Vec3, q: &Vec3, r: &Vec3) -> Option<(f64, f64)> {
    let a = nalgebra::Matrix3x2::from_columns(&[*q, -(rot * r)]);
    let ata = a.transpose() * a;
    let sol = ata.try_inverse()? * (a.transpose() * t);
    Some((sol[0], sol[1]))
}

/// The (R, t) decomposition of E whose triangulated inliers lie in front
/// of both cameras most often.
fn decompose(e: &Mat3, q: &[&Vec3], r: &[&Vec3]) -> Option<(Mat3, Vec3)> {
    let svd = SVD::new(*e, true, true);
    let mut u = svd.u?;
    let mut vt = svd.v_t?;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t = u.column(2).into_owned();
    let cands = [
        (u * w * vt, t),
        (u * w * vt, -t),
        (u * w.transpose() * vt, t),
        (u * w.transpose() * vt, -t),
    ];
    cands
        .iter()
        .map(|(rot, t)| {
            let front = q
                .iter()
                .zip(r)
                .filter(|(x, y)| triangulate(rot, t, x, y).is_some_and(|(a, b)| a > 0.0 && b > 0.0))
                .count();
            (front, *rot, *t)
        })
        .max_by_key(|c| c.0)
        .map(|(_, rot, t)| (rot, t))
}

/// Rotation best aligning reference bearings onto query bearings.
fn rotation_only(q: &[&Vec3], r: &[&Vec3]) -> Option<Mat3> {
    let mut h = Mat3::zeros();
    for (x, y) in q.iter().zip(r) {
        h += x.normalize() * y.normalize().transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Some(u * d * vt)
}

/// Relative pose from 2D-2D matches against a posed reference image.
///
/// Eight-point RANSAC with a Sampson threshold of
/// `inlier_threshold_px`, refit on all inliers, then decomposed with a
/// cheirality vote. The translation has unit direction and is scaled to
/// `|prior − reference|`, the baseline the prior implies. The result is
/// flagged degenerate when the inliers' derotated parallax is below 1e-6.
pub fn solve_two_view(
    query_kps: &[Keypoint],
    ref_kps: &[Keypoint],
    matches: &[Match],
    cam: &CameraModel,
    ref_pose: &Pose,
    prior: &Pose,
    opts: &RansacOptions,
) -> Result<TwoViewSolution, LocalizeError> {
    let n = matches.len();
    if n < 8 {
        return Err(LocalizeError::InsufficientMatches(n));
    }
    let q: Vec<Vec3> = matches.iter().map(|m| normalized(cam, &query_kps[m.query])).collect();
    let r: Vec<Vec3> = matches.iter().map(|m| normalized(cam, &ref_kps[m.reference])).collect();
    let f = 0.5 * (cam.fx + cam.fy);
    let thr = (opts.inlier_threshold_px / f).powi(2);
    let classify = |e: &Mat3| -> (Vec<bool>, f64) {
        let mut sum = 0.0;
        let mask: Vec<bool> = q
            .iter()
            .zip(&r)
            .map(|(x, y)| {
                let d = sampson(e, x, y);
                let ok = d <= thr;
                if ok {
                    sum += d.sqrt() * f;
                }
                ok
            })
            .collect();
        (mask, sum)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(usize, f64, Mat3)> = None;
    for _ in 0..opts.iterations {
        let idx = rand::seq::index::sample(&mut rng, n, 8);
        let qs: Vec<&Vec3> = idx.iter().map(|i| &q[i]).collect();
        let rs: Vec<&Vec3> = idx.iter().map(|i| &r[i]).collect();
        let Some(e) = eight_point(&qs, &rs) else { continue };
        let (mask, sum) = classify(&e);
        let count = mask.iter().filter(|m| **m).count();
        if best.as_ref().is_none_or(|(c, s, _)| count > *c || (count == *c && sum < *s)) {
            best = Some((count, sum, e));
        }
    }
    let needed = opts.min_inliers.max(8);
    let Some((count, _, mut e)) = best else {
        return Err(LocalizeError::NoConsensus { best: 0, needed });
    };
    if count < needed {
        return Err(LocalizeError::NoConsensus { best: count, needed });
    }
    let (mut mask, _) = classify(&e);
    let sel = |mask: &[bool]| -> (Vec<&Vec3>, Vec<&Vec3>) {
        mask.iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| (&q[i], &r[i]))
            .unzip()
    };
    let (qi, ri) = sel(&mask);
    if let Some(refit) = eight_point(&qi, &ri) {
        let (m2, _) = classify(&refit);
        if m2.iter().filter(|m| **m).count() >= count {
            e = refit;
            mask = m2;
        }
    }
    let (mask, sum) = (mask.clone(), classify(&e).1);
    let (qi, ri) = sel(&mask);
    let inlier_count = qi.len();
    let (rot, t) = decompose(&e, &qi, &ri).ok_or(LocalizeError::NoConsensus { best: 0, needed })?;

    let parallax = rotation_only(&qi, &ri)
        .map(|rr| {
            let s: f64 = qi
                .iter()
                .zip(&ri)
                .map(|(x, y)| {
                    let p = rr * **y;
                    let p = p / p.z;
                    ((x.x - p.x).powi(2) + (x.y - p.y).powi(2)).sqrt()
                })
                .sum();
            s / inlier_count as f64
        })
        .unwrap_or(0.0);
    let degenerate = parallax < 1e-6;

    // X_q = R X_r + t; the query center in the reference frame is -Rᵀt
    let baseline = (prior.center() - ref_pose.center()).norm();
    let rel = Pose::from_rotation_matrix(&rot.transpose(), -(rot.transpose() * t) * baseline);
    Ok(TwoViewSolution {
        pose: ref_pose.compose(&rel),
        inliers: mask,
        inlier_count,
        mean_error: sum / inlier_count as f64,
        degenerate,
    })
}
