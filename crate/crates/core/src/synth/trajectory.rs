use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geom::{Pose, Vec3};

/// Frames are stamped at a uniform 10 Hz.
pub const FRAME_INTERVAL_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrajectoryParams {
    /// Arc of a horizontal circle around `pivot`, cameras looking at `pivot`.
    /// `height` is the camera z relative to the pivot; the arc spans
    /// `length / radius` radians counter-clockwise from `start_angle`.
    Orbit {
        pivot: [f64; 3],
        radius: f64,
        height: f64,
        length: f64,
        start_angle: f64,
    },
    /// Straight segment, cameras looking along the travel direction.
    Line {
        start: [f64; 3],
        direction: [f64; 3],
        length: f64,
    },
    /// Back-and-forth rows along ±x stepping +y by `row_spacing`, truncated
    /// at `length`; cameras look along the current leg. Every turn is a pose.
    Lawnmower {
        start: [f64; 3],
        row_length: f64,
        row_spacing: f64,
        length: f64,
    },
}

impl TrajectoryParams {
    pub fn length(&self) -> f64 {
        match *self {
            TrajectoryParams::Orbit { length, .. }
            | TrajectoryParams::Line { length, .. }
            | TrajectoryParams::Lawnmower { length, .. } => length,
        }
    }
}

/// Sum of distances between consecutive camera centers.
pub fn path_length(traj: &[(f64, Pose)]) -> f64 {
    traj.windows(2).map(|w| (w[1].1.center() - w[0].1.center()).norm()).sum()
}

pub fn generate_trajectory(params: &TrajectoryParams, n_poses: usize) -> Result<Vec<(f64, Pose)>, SynthError> {
    let bad = |m: &str| Err(SynthError::BadParams(m.into()));
    if n_poses < 2 {
        return bad("need at least two poses");
    }
    if !(params.length() > 0.0) {
        return bad("length must be positive");
    }
    let up = Vec3::z();
    let stamp = |k: usize| k as f64 * FRAME_INTERVAL_S;
    match *params {
        TrajectoryParams::Orbit {
            pivot,
            radius,
            height,
            length,
            start_angle,
        } => {
            if !(radius > 0.0) {
                return bad("orbit radius must be positive");
            }
            let pivot = Vec3::from(pivot);
            let span = length / radius;
            (0..n_poses)
                .map(|k| {
                    let a = start_angle + span * k as f64 / (n_poses - 1) as f64;
                    let eye = pivot + Vec3::new(radius * a.cos(), radius * a.sin(), height);
                    Pose::look_at(eye, pivot, up)
                        .map(|p| (stamp(k), p))
                        .ok_or_else(|| SynthError::BadParams("camera directly above pivot".into()))
                })
                .collect()
        }
        TrajectoryParams::Line { start, direction, length } => {
            let dir = Vec3::from(direction)
                .try_normalize(1e-12)
                .ok_or_else(|| SynthError::BadParams("zero direction".into()))?;
            let start = Vec3::from(start);
            polyline(&[start, start + dir * length], n_poses)
        }
        TrajectoryParams::Lawnmower {
            start,
            row_length,
            row_spacing,
            length,
        } => {
            if !(row_length > 0.0 && row_spacing > 0.0) {
                return bad("row length and spacing must be positive");
            }
            let mut verts = vec![Vec3::from(start)];
            let mut remaining = length;
            let mut leg = 0usize;
            while remaining > 1e-12 {
                let last = *verts.last().unwrap();
                let (dir, l) = if leg % 2 == 0 {
                    let sign = if (leg / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    (Vec3::new(sign, 0.0, 0.0), row_length)
                } else {
                    (Vec3::new(0.0, 1.0, 0.0), row_spacing)
                };
                let step = l.min(remaining);
                verts.push(last + dir * step);
                remaining -= step;
                leg += 1;
            }
            if verts.len() > n_poses {
                return bad("fewer poses than lawnmower turns");
            }
            polyline(&verts, n_poses)
        }
    }
}

/// Poses along a polyline: every vertex is a pose, the remaining poses are
/// spread over the segments in proportion to their length.
fn polyline(verts: &[Vec3], n_poses: usize) -> Result<Vec<(f64, Pose)>, SynthError> {
    let seg_len: Vec<f64> = verts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let extra = n_poses - verts.len();
    // largest-remainder apportionment of interior poses
    let quotas: Vec<f64> = seg_len.iter().map(|l| extra as f64 * l / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = extra - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }

    let up = Vec3::z();
    let mut out = Vec::with_capacity(n_poses);
    for (s, w) in verts.windows(2).enumerate() {
        let dir = w[1] - w[0];
        let steps = counts[s] + 1;
        for k in 0..steps {
            let p = w[0] + dir * (k as f64 / steps as f64);
            out.push((p, dir));
        }
    }
    let last_dir = verts[verts.len() - 1] - verts[verts.len() - 2];
    out.push((verts[verts.len() - 1], last_dir));
    out.into_iter()
        .enumerate()
        .map(|(k, (p, d))| {
            Pose::looking_along(p, d, up)
                .map(|pose| (k as f64 * FRAME_INTERVAL_S, pose))
                .ok_or_else(|| SynthError::BadParams("vertical travel direction".into()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_spacing() {
        let t = generate_trajectory(
            &TrajectoryParams::Line { start: [0.0, 0.0, 1.0], direction: [1.0, 1.0, 0.0], length: 10.0 },
            11,
        )
        .unwrap();
        assert_eq!(t.len(), 11);
        for w in t.windows(2) {
            assert!(((w[1].1.center() - w[0].1.center()).norm() - 1.0).abs() < 1e-9);
            assert!(w[1].0 > w[0].0);
        }
        let fwd = t[0].1.rotation_matrix().column(2).into_owned();
        assert!((fwd - Vec3::new(1.0, 1.0, 0.0).normalize()).norm() < 1e-12);
    }

    #[test]
    fn orbit_radius_and_gaze() {
        let pivot = Vec3::new(0.5, -0.2, 0.3);
        let t = generate_trajectory(
            &TrajectoryParams::Orbit { pivot: pivot.into(), radius: 4.0, height: 0.0, length: 10.0, start_angle: 0.3 },
            20,
        )
        .unwrap();
        for (_, p) in &t {
            assert!(((p.center() - pivot).norm() - 4.0).abs() < 1e-9);
            let fwd = p.rotation_matrix().column(2).into_owned();
            assert!((fwd - (pivot - p.center()).normalize()).norm() < 1e-12);
        }
        let arc = 4.0 * (t[0].1.center() - pivot).angle(&(t[19].1.center() - pivot));
        assert!((arc - 10.0).abs() < 1e-9);
    }

    #[test]
    fn lawnmower_path_length_by_summation() {
        let t = generate_trajectory(
            &TrajectoryParams::Lawnmower { start: [0.0, 0.0, 1.0], row_length: 5.0, row_spacing: 2.0, length: 10.0 },
            50,
        )
        .unwrap();
        assert_eq!(t.len(), 50);
        let sum: f64 = t.windows(2).map(|w| (w[1].1.center() - w[0].1.center()).norm()).sum();
        assert!((sum - 10.0).abs() < 1e-9, "{sum}");
        // turns are poses: (5,0) and (5,2)
        assert!(t.iter().any(|(_, p)| (p.center() - Vec3::new(5.0, 0.0, 1.0)).norm() < 1e-12));
        assert!(t.iter().any(|(_, p)| (p.center() - Vec3::new(5.0, 2.0, 1.0)).norm() < 1e-12));
    }

    #[test]
    fn bad_params() {
        let line = TrajectoryParams::Line { start: [0.0; 3], direction: [0.0, 0.0, 1.0], length: 1.0 };
        assert!(generate_trajectory(&line, 5).is_err());
        assert!(generate_trajectory(&line, 1).is_err());
        let orbit = TrajectoryParams::Orbit { pivot: [0.0; 3], radius: 0.0, height: 1.0, length: 1.0, start_angle: 0.0 };
        assert!(generate_trajectory(&orbit, 5).is_err());
    }
}
