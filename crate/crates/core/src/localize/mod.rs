//! Pose estimation of a query image against a map: reference views near a
//! prior are rendered from the field (or taken from an image database),
//! matched to the query, and the pose is solved from the pooled matches.

mod p3p;
mod pnp;
mod references;
mod two_view;

pub use p3p::p3p;
pub use pnp::{mean_reprojection_error, refine_pose, reprojection_error, solve_pnp_ransac, PnpSolution, RansacOptions};
pub use references::{build_reference_views, database_cost, depth_at, lift_matches, sample_reference_poses};
pub use two_view::{solve_two_view, TwoViewSolution};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, match_descriptors, match_records, FastOptions, Features, MatchOptions, MatchRecord};
use crate::field::{RadianceField, RenderOptions};
use crate::geom::{CameraModel, Pose, Vec2, Vec3};
use crate::image::{GrayImage, RgbImage};
use crate::synth::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("reference count must be at least 1")]
    BadCount,
    #[error("image database is empty")]
    EmptyDatabase,
    #[error("reference view has no depth")]
    NoDepth,
    #[error("{0} correspondences, need at least 4")]
    InsufficientCorrespondences(usize),
    #[error("{0} matches, need at least 8")]
    InsufficientMatches(usize),
    #[error("every sampled point triple was degenerate")]
    Degenerate,
    #[error("best consensus has {best} inliers, need {needed}")]
    NoConsensus { best: usize, needed: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Where reference views come from.
#[derive(Debug, Clone, Copy)]
pub enum MapSource<'a> {
    Field(&'a RadianceField),
    /// Stored posed images; no depth, so poses come from two-view geometry.
    Database(&'a Dataset),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Rendered,
    /// Index into the database frames.
    Database(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceView {
    pub rgb: RgbImage,
    /// Meters, 0 where undefined; `None` for database images.
    pub depth: Option<GrayImage>,
    pub pose: Pose,
    pub source: ReferenceSource,
}

/// A query pixel paired with a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: Vec3,
    pub pixel: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeOptions {
    pub n_references: usize,
    /// Meters.
    pub lateral_offset: f64,
    pub ransac: RansacOptions,
    pub refine_iterations: usize,
    pub features: FastOptions,
    pub matching: MatchOptions,
    pub render: RenderOptions,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            n_references: 2,
            lateral_offset: 0.2,
            ransac: RansacOptions::default(),
            refine_iterations: 10,
            features: FastOptions::default(),
            matching: MatchOptions::default(),
            render: RenderOptions::default(),
        }
    }
}

impl LocalizeOptions {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        let bad = |m: &str| Err(LocalizeError::InvalidOptions(m.into()));
        if self.n_references == 0 {
            return bad("n_references must be at least 1");
        }
        if !(self.lateral_offset > 0.0) {
            return bad("lateral_offset must be positive");
        }
        self.ransac.validate().map_err(LocalizeError::InvalidOptions)?;
        self.render.validate().map_err(LocalizeError::InvalidOptions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Degenerate,
    InsufficientMatches,
}

/// Per-reference statistics of one localization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub source: ReferenceSource,
    pub matches: usize,
    /// Matches that entered the solver (lifted, or two-view candidates).
    pub used: usize,
    pub inliers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    /// Camera-to-world; the prior when the status is not `Ok`.
    pub pose: Pose,
    pub inlier_count: usize,
    pub total_matches: usize,
    /// Pixels; reprojection error for field mode, Sampson distance for the
    /// database branch. 0 when unsolved.
    pub mean_reprojection_error: f64,
    pub status: Status,
    /// Translation scale was assumed rather than measured.
    pub scale_ambiguous: bool,
    pub references: Vec<ReferenceReport>,
}

/// Intermediate products kept for debug output.
#[derive(Debug, Clone)]
pub struct FrameTrace {
    pub references: Vec<ReferenceView>,
    /// Per reference: the matches with their final inlier flags.
    pub records: Vec<Vec<MatchRecord>>,
}

fn failed(prior: &Pose, status: Status, total: usize, refs: Vec<ReferenceReport>, scale_ambiguous: bool) -> LocalizationResult {
    LocalizationResult {
        pose: *prior,
        inlier_count: 0,
        total_matches: total,
        mean_reprojection_error: 0.0,
        status,
        scale_ambiguous,
        references: refs,
    }
}

fn status_of(e: &LocalizeError) -> Status {
    match e {
        LocalizeError::Degenerate => Status::Degenerate,
        _ => Status::InsufficientMatches,
    }
}

/// Localizes one query image. Failures are reported through the status.
pub fn localize_frame(
    source: &MapSource,
    cam: &CameraModel,
    query: &RgbImage,
    prior: &Pose,
    opts: &LocalizeOptions,
) -> Result<LocalizationResult, LocalizeError> {
    localize_frame_traced(source, cam, query, prior, opts).map(|(r, _)| r)
}

/// [`localize_frame`] that also returns the reference views and matches.
/// Errors only for invalid options or an empty database.
pub fn localize_frame_traced(
    source: &MapSource,
    cam: &CameraModel,
    query: &RgbImage,
    prior: &Pose,
    opts: &LocalizeOptions,
) -> Result<(LocalizationResult, FrameTrace), LocalizeError> {
    opts.validate()?;
    let refs = build_reference_views(source, cam, prior, opts.n_references, opts.lateral_offset, &opts.render)?;
    let qf = features::extract(query, &opts.features).unwrap_or_default();
    let per_ref: Vec<(Features, Vec<features::Match>)> = refs
        .par_iter()
        .map(|r| {
            let rf = features::extract(&r.rgb, &opts.features).unwrap_or_default();
            let m = if qf.descriptors.is_empty() || rf.descriptors.is_empty() {
                Vec::new()
            } else {
                match_descriptors(&qf.descriptors, &rf.descriptors, &opts.matching)
            };
            (rf, m)
        })
        .collect();
    let total: usize = per_ref.iter().map(|(_, m)| m.len()).sum();
    let mut records: Vec<Vec<MatchRecord>> = per_ref
        .iter()
        .map(|(rf, m)| match_records(&qf.keypoints, &rf.keypoints, m, &[]))
        .collect();
    let mut reports: Vec<ReferenceReport> = refs
        .iter()
        .zip(&per_ref)
        .map(|(r, (_, m))| ReferenceReport { source: r.source, matches: m.len(), used: 0, inliers: 0 })
        .collect();

    let result = match source {
        MapSource::Field(_) => {
            // pool lifted pairs in reference order, then match order
            let mut pooled = Vec::new();
            let mut origin = Vec::new();
            for (k, (r, (rf, m))) in refs.iter().zip(&per_ref).enumerate() {
                let (c, from) = lift_matches(r, cam, m, &qf.keypoints, &rf.keypoints)?;
                reports[k].used = c.len();
                origin.extend(from.into_iter().map(|i| (k, i)));
                pooled.extend(c);
            }
            match solve_pnp_ransac(&pooled, cam, &opts.ransac, opts.refine_iterations) {
                Ok(sol) => {
                    for (&(k, i), &inl) in origin.iter().zip(&sol.inliers) {
                        records[k][i].inlier = inl;
                        reports[k].inliers += inl as usize;
                    }
                    LocalizationResult {
                        pose: sol.pose,
                        inlier_count: sol.inlier_count,
                        total_matches: total,
                        mean_reprojection_error: sol.mean_error,
                        status: Status::Ok,
                        scale_ambiguous: false,
                        references: reports,
                    }
                }
                Err(e) => failed(prior, status_of(&e), total, reports, false),
            }
        }
        MapSource::Database(_) => {
            let mut best: Option<(usize, TwoViewSolution)> = None;
            let mut last_err = LocalizeError::InsufficientMatches(0);
            for (k, (r, (rf, m))) in refs.iter().zip(&per_ref).enumerate() {
                reports[k].used = m.len();
                match solve_two_view(&qf.keypoints, &rf.keypoints, m, cam, &r.pose, prior, &opts.ransac) {
                    Ok(sol) => {
                        reports[k].inliers = sol.inlier_count;
                        if best.as_ref().is_none_or(|(_, b)| sol.inlier_count > b.inlier_count) {
                            best = Some((k, sol));
                        }
                    }
                    Err(e) => last_err = e,
                }
            }
            match best {
                Some((k, sol)) => {
                    for (rec, &inl) in records[k].iter_mut().zip(&sol.inliers) {
                        rec.inlier = inl;
                    }
                    if sol.degenerate {
                        failed(prior, Status::Degenerate, total, reports, true)
                    } else {
                        LocalizationResult {
                            pose: sol.pose,
                            inlier_count: sol.inlier_count,
                            total_matches: total,
                            mean_reprojection_error: sol.mean_error,
                            status: Status::Ok,
                            scale_ambiguous: true,
                            references: reports,
                        }
                    }
                }
                None => failed(prior, status_of(&last_err), total, reports, true),
            }
        }
    };
    Ok((result, FrameTrace { references: refs, records }))
}

/// One localized frame of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    /// Index into the query dataset's frames.
    pub frame: usize,
    pub timestamp: f64,
    pub pose: Pose,
    pub status: Status,
    pub inliers: usize,
    pub matches: usize,
    pub reproj_error_px: f64,
    pub elapsed_ms: f64,
}

/// Estimated trajectory with per-frame status, in query order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryEstimate {
    pub frames: Vec<FrameEstimate>,
}

#[derive(Serialize)]
struct TumFields {
    timestamp: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    qw: f64,
}

#[derive(Serialize)]
struct LogLine<'a> {
    frame: usize,
    status: &'a Status,
    inliers: usize,
    matches: usize,
    reproj_error_px: f64,
    pose: TumFields,
    elapsed_ms: f64,
}

impl TrajectoryEstimate {
    pub fn poses(&self) -> Vec<(f64, Pose)> {
        self.frames.iter().map(|f| (f.timestamp, f.pose)).collect()
    }

    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.status != Status::Ok).count()
    }

    pub fn statuses(&self) -> Vec<Status> {
        self.frames.iter().map(|f| f.status).collect()
    }

    /// One JSON object per frame.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for f in &self.frames {
            let [qw, qx, qy, qz] = f.pose.canonical_wxyz();
            let t = f.pose.translation;
            let line = LogLine {
                frame: f.frame,
                status: &f.status,
                inliers: f.inliers,
                matches: f.matches,
                reproj_error_px: f.reproj_error_px,
                pose: TumFields { timestamp: f.timestamp, tx: t.x, ty: t.y, tz: t.z, qx, qy, qz, qw },
                elapsed_ms: f.elapsed_ms,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Localizes the query frames in order (the `query` split, or every frame
/// when the split is empty). Each frame's prior is the previous estimate;
/// after a failure the last good estimate is kept as both the frame's pose
/// and the next prior.
pub fn run_sequence(
    source: &MapSource,
    cam: &CameraModel,
    queries: &Dataset,
    initial_prior: &Pose,
    opts: &LocalizeOptions,
) -> Result<TrajectoryEstimate, LocalizeError> {
    run_sequence_traced(source, cam, queries, initial_prior, opts, |_, _| {})
}

/// [`run_sequence`] that hands every frame's estimate and trace to
/// `on_frame` as it completes.
pub fn run_sequence_traced(
    source: &MapSource,
    cam: &CameraModel,
    queries: &Dataset,
    initial_prior: &Pose,
    opts: &LocalizeOptions,
    mut on_frame: impl FnMut(&FrameEstimate, &FrameTrace),
) -> Result<TrajectoryEstimate, LocalizeError> {
    let order: Vec<usize> = if queries.splits.query.is_empty() {
        (0..queries.frames.len()).collect()
    } else {
        queries.splits.query.clone()
    };
    let mut prior = *initial_prior;
    let mut est = TrajectoryEstimate::default();
    for i in order {
        let frame = &queries.frames[i];
        let start = Instant::now();
        let (r, trace) = localize_frame_traced(source, cam, &frame.image, &prior, opts)?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        if r.status == Status::Ok {
            prior = r.pose;
        }
        est.frames.push(FrameEstimate {
            frame: i,
            timestamp: frame.timestamp,
            pose: prior,
            status: r.status,
            inliers: r.inlier_count,
            matches: r.total_matches,
            reproj_error_px: r.mean_reprojection_error,
            elapsed_ms,
        });
        on_frame(est.frames.last().unwrap(), &trace);
    }
    Ok(est)
}
