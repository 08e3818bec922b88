use std::f64::consts::PI;

use super::{Correspondence, LocalizeError, MapSource, ReferenceSource, ReferenceView};
use crate::features::{Keypoint, Match};
use crate::field::{render_image, RenderOptions};
use crate::geom::{rotation_error, CameraModel, Pose, Vec2, Vec3};
use crate::image::GrayImage;

/// Reference poses around a prior: ±x first, then ±y (camera frame), then
/// the rest evenly on a circle of radius `offset` in the camera x-y plane.
/// Orientation is the prior's throughout.
pub fn sample_reference_poses(prior: &Pose, n: usize, offset: f64) -> Result<Vec<Pose>, LocalizeError> {
    if n == 0 {
        return Err(LocalizeError::BadCount);
    }
    if n == 1 {
        return Ok(vec![*prior]);
    }
    let mut local = vec![
        Vec3::new(offset, 0.0, 0.0),
        Vec3::new(-offset, 0.0, 0.0),
        Vec3::new(0.0, offset, 0.0),
        Vec3::new(0.0, -offset, 0.0),
    ];
    local.truncate(n);
    let rest = n.saturating_sub(4);
    for k in 0..rest {
        // phase of π/4 keeps the circle off the axis points
        let a = PI / 4.0 + 2.0 * PI * k as f64 / rest as f64;
        local.push(Vec3::new(offset * a.cos(), offset * a.sin(), 0.0));
    }
    Ok(local
        .iter()
        .map(|d| prior.compose(&Pose::from_translation(*d)))
        .collect())
}

/// Cost used to rank database images against a prior: center distance plus
/// half a meter per radian of rotation.
pub fn database_cost(prior: &Pose, pose: &Pose) -> f64 {
    (prior.center() - pose.center()).norm() + 0.5 * rotation_error(prior, pose)
}

/// Renders the field at the sampled poses, or fetches the `n` database
/// images closest to the prior (ties go to the lower index).
pub fn build_reference_views(
    source: &MapSource,
    cam: &CameraModel,
    prior: &Pose,
    n: usize,
    offset: f64,
    render: &RenderOptions,
) -> Result<Vec<ReferenceView>, LocalizeError> {
    match source {
        MapSource::Field(field) => Ok(sample_reference_poses(prior, n, offset)?
            .into_iter()
            .map(|pose| {
                let view = render_image(field, cam, &pose, render);
                ReferenceView {
                    rgb: view.rgb,
                    depth: Some(view.depth),
                    pose,
                    source: ReferenceSource::Rendered,
                }
            })
            .collect()),
        MapSource::Database(db) => {
            if n == 0 {
                return Err(LocalizeError::BadCount);
            }
            if db.frames.is_empty() {
                return Err(LocalizeError::EmptyDatabase);
            }
            let mut order: Vec<(f64, usize)> = db
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| (database_cost(prior, &f.pose), i))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Ok(order
                .iter()
                .take(n)
                .map(|&(_, i)| ReferenceView {
                    rgb: db.frames[i].image.clone(),
                    depth: None,
                    pose: db.frames[i].pose,
                    source: ReferenceSource::Database(i),
                })
                .collect())
        }
    }
}

/// Bilinear depth at a subpixel position; `None` if any contributing pixel
/// is undefined (0).
pub fn depth_at(depth: &GrayImage, x: f64, y: f64) -> Option<f64> {
    let taps = depth.bilinear(x, y)?;
    let mut d = 0.0;
    for (px, py, w) in taps {
        let v = depth.get(px, py) as f64;
        if v <= 0.0 && w > 0.0 {
            return None;
        }
        d += w * v;
    }
    (d > 0.0).then_some(d)
}

/// Lifts each match to a 2D-3D pair: the reference keypoint is unprojected
/// at its rendered depth and moved to world coordinates. Matches without
/// defined depth are dropped. Returns the pairs and the index of the match
/// each one came from.
pub fn lift_matches(
    reference: &ReferenceView,
    cam: &CameraModel,
    matches: &[Match],
    query_kps: &[Keypoint],
    ref_kps: &[Keypoint],
) -> Result<(Vec<Correspondence>, Vec<usize>), LocalizeError> {
    let depth = reference.depth.as_ref().ok_or(LocalizeError::NoDepth)?;
    let mut out = Vec::new();
    let mut from = Vec::new();
    for (k, m) in matches.iter().enumerate() {
        let r = &ref_kps[m.reference];
        let Some(d) = depth_at(depth, r.x, r.y) else { continue };
        let Ok(p_cam) = cam.unproject(&Vec2::new(r.x, r.y), d) else { continue };
        let q = &query_kps[m.query];
        out.push(Correspondence {
            world: reference.pose.transform_point(&p_cam),
            pixel: Vec2::new(q.x, q.y),
        });
        from.push(k);
    }
    Ok((out, from))
}
