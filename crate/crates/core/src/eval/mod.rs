//! Comparison of estimated trajectories with ground truth, and map-size
//! accounting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::tum::{self, TumError};
use crate::geom::{rigid_fit, rotation_error, Pose, Similarity, Vec3};
pub use crate::localize::{FrameEstimate, Status, TrajectoryEstimate};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no timestamp pairs within the association window")]
    NoPairs,
    #[error("alignment needs at least three non-collinear positions")]
    Degenerate,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tum(#[from] TumError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An estimated pose and the ground-truth pose it was associated with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub est_index: usize,
    pub gt_index: usize,
    pub est_time: f64,
    pub gt_time: f64,
    pub est: Pose,
    pub gt: Pose,
}

/// Greedy nearest-timestamp pairing: candidate pairs are taken in order of
/// increasing |dt| (ties by estimate index, then ground-truth index), each
/// pose used at most once. Pairs farther apart than `max_dt` are never
/// formed. Output is sorted by estimate index.
pub fn associate(est: &[(f64, Pose)], gt: &[(f64, Pose)], max_dt: f64) -> Result<Vec<Pair>, EvalError> {
    let mut cands = Vec::new();
    for (i, (te, _)) in est.iter().enumerate() {
        // gt is usually sorted; a window scan keeps this cheap either way
        for (j, (tg, _)) in gt.iter().enumerate() {
            let dt = (te - tg).abs();
            if dt <= max_dt {
                cands.push((dt, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if used_e[i] || used_g[j] {
            continue;
        }
        used_e[i] = true;
        used_g[j] = true;
        pairs.push(Pair {
            est_index: i,
            gt_index: j,
            est_time: est[i].0,
            gt_time: gt[j].0,
            est: est[i].1,
            gt: gt[j].1,
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    pairs.sort_by_key(|p| p.est_index);
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Both trajectories already share the map frame.
    #[default]
    None,
    Rigid,
    Similarity,
}

/// Least-squares transform taking estimated centers onto ground truth.
pub fn align_umeyama(pairs: &[Pair], with_scale: bool) -> Result<Similarity, EvalError> {
    let src: Vec<Vec3> = pairs.iter().map(|p| p.est.center()).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|p| p.gt.center()).collect();
    rigid_fit(&src, &dst, with_scale).map_err(|_| EvalError::Degenerate)
}

/// Pairs with the estimates moved by the requested alignment.
pub fn aligned(pairs: &[Pair], alignment: Alignment) -> Result<Vec<Pair>, EvalError> {
    let sim = match alignment {
        Alignment::None => return Ok(pairs.to_vec()),
        Alignment::Rigid => align_umeyama(pairs, false)?,
        Alignment::Similarity => align_umeyama(pairs, true)?,
    };
    Ok(pairs
        .iter()
        .map(|p| Pair {
            est: sim.apply_pose(&p.est),
            ..*p
        })
        .collect())
}

pub fn translation_errors(pairs: &[Pair]) -> Vec<f64> {
    pairs.iter().map(|p| (p.est.center() - p.gt.center()).norm()).collect()
}

pub fn rotation_errors(pairs: &[Pair]) -> Vec<f64> {
    pairs.iter().map(|p| rotation_error(&p.est, &p.gt)).collect()
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Root-mean-square translation error after the optional alignment.
pub fn ate_rmse(pairs: &[Pair], alignment: Alignment) -> Result<f64, EvalError> {
    Ok(rms(&translation_errors(&aligned(pairs, alignment)?)))
}

/// Mean geodesic rotation error.
pub fn mean_rotation_error(pairs: &[Pair]) -> f64 {
    mean(&rotation_errors(pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub map_bytes: u64,
    pub db_bytes: u64,
    /// `map_bytes / db_bytes`.
    pub ratio: f64,
}

/// Bytes of the field file against the image database (`images/*` plus
/// `poses.txt`).
pub fn storage_report(field_path: &Path, database_dir: &Path) -> Result<StorageReport, EvalError> {
    let map_bytes = std::fs::metadata(field_path).map_err(io_err(field_path))?.len();
    let poses = database_dir.join("poses.txt");
    let mut db_bytes = std::fs::metadata(&poses).map_err(io_err(&poses))?.len();
    let images = database_dir.join("images");
    if images.is_dir() {
        for entry in std::fs::read_dir(&images).map_err(io_err(&images))? {
            let entry = entry.map_err(io_err(&images))?;
            let md = entry.metadata().map_err(io_err(&images))?;
            if md.is_file() {
                db_bytes += md.len();
            }
        }
    }
    Ok(StorageReport {
        map_bytes,
        db_bytes,
        ratio: if db_bytes == 0 { 0.0 } else { map_bytes as f64 / db_bytes as f64 },
    })
}

/// Metrics of one localization run against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ate_rmse_m: f64,
    pub mean_rotation_error_rad: f64,
    pub alignment: Alignment,
    pub frame_count: usize,
    pub failure_count: usize,
    /// Estimate-order frame indices of the evaluated pairs.
    pub frames: Vec<usize>,
    pub translation_errors_m: Vec<f64>,
    pub rotation_errors_rad: Vec<f64>,
    pub statuses: Vec<Status>,
    pub trajectory_length_m: f64,
    pub storage: Option<StorageReport>,
    /// Aligned estimate and its ground truth, written as TUM files.
    #[serde(skip)]
    pub est_trajectory: Vec<(f64, Pose)>,
    #[serde(skip)]
    pub gt_trajectory: Vec<(f64, Pose)>,
}

/// Length of the polyline through the poses' centers.
pub fn trajectory_length(poses: &[(f64, Pose)]) -> f64 {
    poses.windows(2).map(|w| (w[1].1.center() - w[0].1.center()).norm()).sum()
}

/// Associates, aligns and scores an estimate. `statuses` (estimate order)
/// may be empty, in which case every frame counts as `Ok`.
pub fn evaluate(
    est: &[(f64, Pose)],
    statuses: &[Status],
    gt: &[(f64, Pose)],
    max_dt: f64,
    alignment: Alignment,
    storage: Option<StorageReport>,
) -> Result<EvalReport, EvalError> {
    let pairs = aligned(&associate(est, gt, max_dt)?, alignment)?;
    let t = translation_errors(&pairs);
    let r = rotation_errors(&pairs);
    let statuses: Vec<Status> = pairs
        .iter()
        .map(|p| statuses.get(p.est_index).copied().unwrap_or(Status::Ok))
        .collect();
    let gt_traj: Vec<(f64, Pose)> = pairs.iter().map(|p| (p.gt_time, p.gt)).collect();
    Ok(EvalReport {
        ate_rmse_m: rms(&t),
        mean_rotation_error_rad: mean(&r),
        alignment,
        frame_count: pairs.len(),
        failure_count: statuses.iter().filter(|s| **s != Status::Ok).count(),
        frames: pairs.iter().map(|p| p.est_index).collect(),
        translation_errors_m: t,
        rotation_errors_rad: r,
        statuses,
        trajectory_length_m: trajectory_length(&gt_traj),
        storage,
        est_trajectory: pairs.iter().map(|p| (p.est_time, p.est)).collect(),
        gt_trajectory: gt_traj,
    })
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::Degenerate => "degenerate",
        Status::InsufficientMatches => "insufficient_matches",
    }
}

/// Writes `report.json`, `trajectory_est.txt`, `trajectory_gt.txt` and
/// `errors.csv` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let p = dir.join("report.json");
    std::fs::write(&p, json).map_err(io_err(&p))?;
    tum::write_trajectory(
        &dir.join("trajectory_est.txt"),
        "estimated camera-to-world poses",
        report.est_trajectory.iter().map(|(t, p)| (*t, p)),
    )?;
    tum::write_trajectory(
        &dir.join("trajectory_gt.txt"),
        "ground-truth camera-to-world poses",
        report.gt_trajectory.iter().map(|(t, p)| (*t, p)),
    )?;
    let mut csv = String::from("# per-frame errors\nframe,translation_err_m,rotation_err_rad,status\n");
    for i in 0..report.frame_count {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            report.frames[i],
            tum::sig9(report.translation_errors_m[i]),
            tum::sig9(report.rotation_errors_rad[i]),
            status_name(report.statuses[i])
        );
    }
    let p = dir.join("errors.csv");
    std::fs::write(&p, csv).map_err(io_err(&p))
}
