//! The subcommands as library functions. Each takes the resolved
//! configuration and explicit paths, and reports through [`CliError`].

use std::path::{Path, PathBuf};

use fieldloc::eval::{self, EvalReport, StorageReport};
use fieldloc::field::{self, RadianceField, TrainReport, TrainView};
use fieldloc::features::write_match_debug;
use fieldloc::geom::tum;
use fieldloc::localize::{self, MapSource, Status, TrajectoryEstimate};
use fieldloc::synth::{self, BlurFilter, Dataset, DatasetOptions, Splits};
use fieldloc::{CameraModel, Pose};
use serde::Deserialize;

use crate::config::{CameraConfig, PathConfig, RunConfig};
use crate::CliError;

/// Directory and file names inside a run directory.
pub mod layout {
    pub const MAP: &str = "map";
    pub const DATABASE: &str = "database";
    pub const QUERY: &str = "query";
    pub const SCENE: &str = "scene.json";
    pub const FIELD: &str = "field.rfld";
    pub const TRAIN_REPORT: &str = "train_report.json";
    pub const TRAJECTORY: &str = "trajectory_est.txt";
    pub const FRAMES: &str = "frames.jsonl";
    pub const EVAL: &str = "eval";
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn synth_err(e: synth::SynthError) -> CliError {
    match e {
        synth::SynthError::Io { .. } | synth::SynthError::Image(_) | synth::SynthError::Tum(_) => {
            CliError::Io { path: PathBuf::new(), message: e.to_string() }
        }
        _ => CliError::config(e.to_string()),
    }
}

/// Seeds for the independent random streams of a run.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream)
}

fn concat_paths(paths: &[PathConfig]) -> Result<Vec<(f64, Pose)>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let traj = synth::generate_trajectory(&p.path, p.frames).map_err(synth_err)?;
        out.extend(traj.into_iter().map(|(_, pose)| pose));
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, pose)| (i as f64 * synth::FRAME_INTERVAL_S, pose))
        .collect())
}

pub struct SynthSummary {
    pub map_generated: usize,
    pub map_blurred: usize,
    pub map_retained: usize,
    pub blurred_removed: usize,
    pub database_frames: usize,
    pub query_frames: usize,
}

fn render_set(
    gt: &RadianceField,
    cam: &CameraConfig,
    traj: &[(f64, Pose)],
    opts: DatasetOptions,
) -> Result<Dataset, CliError> {
    synth::make_dataset(gt, &cam.model()?, traj, &opts).map_err(synth_err)
}

/// Generates the map (training) images with injected blur and filters
/// them, the image database, and the query sequence.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary, CliError> {
    let scene = cfg.scene()?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    let scene_path = out.join(layout::SCENE);
    let json = serde_json::to_string_pretty(&scene).expect("scene serializes") + "\n";
    std::fs::write(&scene_path, json).map_err(io(&scene_path))?;
    let gt = synth::voxelize_scene(&scene, cfg.scene.gt_dims, None).map_err(synth_err)?;

    let map_traj = concat_paths(&cfg.map.paths)?;
    let map_opts = DatasetOptions {
        noise_sigma: cfg.map.noise_sigma,
        blur_fraction: cfg.map.blur_fraction,
        blur_kernel: cfg.map.blur_kernel,
        seed: stream_seed(cfg.seed, 1),
        ..Default::default()
    };
    let map = render_set(&gt, &cfg.map.camera, &map_traj, map_opts)?;
    let filter = match (cfg.map.keep_fraction, cfg.map.blur_threshold) {
        (Some(_), Some(_)) => return Err(CliError::config("map: set keep_fraction or blur_threshold, not both")),
        (Some(f), None) => BlurFilter::KeepFraction(f),
        (None, Some(t)) => BlurFilter::Threshold(t),
        (None, None) if cfg.map.blur_fraction > 0.0 => BlurFilter::default(),
        (None, None) => BlurFilter::KeepFraction(1.0),
    };
    let (mut kept, idx) = synth::filter_blurred(&map, filter).map_err(synth_err)?;
    let n = kept.frames.len();
    kept.splits = Splits::with_holdout(n, field::holdout_indices(n, cfg.train.holdout_fraction));
    synth::save_dataset(&kept, &out.join(layout::MAP)).map_err(synth_err)?;
    let map_blurred = map.frames.iter().filter(|f| f.blurred).count();
    let kept_blurred = idx.iter().filter(|&&i| map.frames[i].blurred).count();

    let db_traj = concat_paths(&cfg.database.paths)?;
    let db_opts = DatasetOptions { seed: stream_seed(cfg.seed, 2), ..Default::default() };
    let mut db = render_set(&gt, &cfg.database.camera, &db_traj, db_opts)?;
    db.splits = Splits::with_holdout(db.frames.len(), Vec::new());
    synth::save_dataset(&db, &out.join(layout::DATABASE)).map_err(synth_err)?;

    let q_traj = concat_paths(std::slice::from_ref(&cfg.query.path))?;
    let q_opts = DatasetOptions {
        noise_sigma: cfg.query.noise_sigma,
        seed: stream_seed(cfg.seed, 3),
        ..Default::default()
    };
    let mut q = render_set(&gt, &cfg.query.camera, &q_traj, q_opts)?;
    q.splits = Splits::all_query(q.frames.len());
    synth::save_dataset(&q, &out.join(layout::QUERY)).map_err(synth_err)?;

    Ok(SynthSummary {
        map_generated: map.frames.len(),
        map_blurred,
        map_retained: n,
        blurred_removed: map_blurred - kept_blurred,
        database_frames: db.frames.len(),
        query_frames: q.frames.len(),
    })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    synth::load_dataset(dir).map_err(|e| match e {
        synth::SynthError::InvalidDataset(m) => CliError::config(format!("{}: {m}", dir.display())),
        other => CliError::io(dir, other),
    })
}

pub fn load_field(path: &Path) -> Result<RadianceField, CliError> {
    field::load_field(path).map_err(|e| CliError::io(path, e))
}

/// Initial field over the configured (or scene) bounds.
pub fn initial_field(cfg: &RunConfig) -> Result<RadianceField, CliError> {
    let scene = cfg.scene()?;
    let lo = cfg.field.bbox_min.unwrap_or(scene.bbox_min);
    let hi = cfg.field.bbox_max.unwrap_or(scene.bbox_max);
    RadianceField::new(lo, hi, cfg.field.dims, cfg.field.init_density, cfg.field.init_color)
        .map_err(|e| CliError::config(format!("field: {e}")))
}

/// Trains a field on the map dataset and writes `field_out` with the
/// report next to it. With zero iterations only the report is written.
pub fn cmd_train(cfg: &RunConfig, dataset_dir: &Path, field_out: &Path) -> Result<TrainReport, CliError> {
    let ds = load_dataset(dataset_dir)?;
    let views: Vec<TrainView> = ds
        .frames
        .iter()
        .map(|f| TrainView { image: f.image.clone(), pose: f.pose })
        .collect();
    let mut field = initial_field(cfg)?;
    let mut tc = cfg.train;
    tc.seed = stream_seed(cfg.seed, tc.seed.wrapping_add(4));
    let holdout = (!ds.splits.holdout.is_empty()).then_some(ds.splits.holdout.as_slice());
    let report = field::train(&mut field, &ds.camera, &views, holdout, &tc).map_err(|e| match e {
        field::FieldError::Io { .. } => CliError::io(dataset_dir, e),
        other => CliError::config(other.to_string()),
    })?;
    let dir = field_out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let report_path = dir.join(layout::TRAIN_REPORT);
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&report_path, json).map_err(io(&report_path))?;
    if tc.iterations == 0 {
        return Ok(report);
    }
    field::save_field(&field, field_out).map_err(|e| CliError::io(field_out, e))?;
    Ok(report)
}

pub fn check_psnr_floor(cfg: &RunConfig, report: &TrainReport) -> Result<(), CliError> {
    if report.holdout_psnr < cfg.psnr_floor {
        return Err(CliError::QualityFloor { psnr: report.holdout_psnr, floor: cfg.psnr_floor });
    }
    Ok(())
}

/// Parses `tx ty tz qx qy qz qw`.
pub fn parse_pose(text: &str) -> Result<Pose, CliError> {
    tum::parse_line(&format!("0 {text}"))
        .map(|(_, p)| p)
        .map_err(|e| CliError::config(format!("--pose: {e}")))
}

/// Renders color (P6) and depth (16-bit P5, millimeters, 0 = undefined)
/// for each pose. Returns the number of frames written.
pub fn cmd_render(field: &RadianceField, cam: &CameraModel, poses: &[Pose], out: &Path, opts: &field::RenderOptions) -> Result<usize, CliError> {
    std::fs::create_dir_all(out).map_err(io(out))?;
    for (i, p) in poses.iter().enumerate() {
        let v = field::render_image(field, cam, p, opts);
        let rgb = out.join(format!("{i:06}.ppm"));
        v.rgb.save_ppm(&rgb).map_err(|e| CliError::io(&rgb, e))?;
        let depth = out.join(format!("{i:06}_depth.pgm"));
        v.depth.save_pgm16(&depth, 1000.0).map_err(|e| CliError::io(&depth, e))?;
    }
    Ok(poses.len())
}

/// Map for `cmd_localize`.
pub enum MapInput {
    Field(PathBuf),
    Database { dir: PathBuf, stride: usize },
}

/// Localizes the query sequence. Writes the estimated trajectory and the
/// per-frame log into `out`; with `debug` also a match visualization per
/// frame. Fails with exit code 5 when more than half of the frames fail.
pub fn cmd_localize(
    cfg: &RunConfig,
    map: &MapInput,
    query_dir: &Path,
    out: &Path,
    debug: bool,
) -> Result<TrajectoryEstimate, CliError> {
    let queries = load_dataset(query_dir)?;
    if queries.frames.is_empty() {
        return Err(CliError::config(format!("{}: query set is empty", query_dir.display())));
    }
    let order = if queries.splits.query.is_empty() { 0 } else { queries.splits.query[0] };
    let first = &queries.frames[order];
    let d = cfg.query.prior_offset;
    let prior = Pose::new(first.pose.rotation, first.pose.translation + fieldloc::geom::Vec3::new(d[0], d[1], d[2]));
    let mut opts = cfg.localize;
    opts.ransac.seed = stream_seed(cfg.seed, opts.ransac.seed.wrapping_add(5));
    std::fs::create_dir_all(out).map_err(io(out))?;
    let debug_dir = out.join("debug");
    if debug {
        std::fs::create_dir_all(&debug_dir).map_err(io(&debug_dir))?;
    }
    let mut debug_err = None;
    let field;
    let db;
    let source = match map {
        MapInput::Field(p) => {
            field = load_field(p)?;
            MapSource::Field(&field)
        }
        MapInput::Database { dir, stride } => {
            let full = load_dataset(dir)?;
            if full.camera != queries.camera {
                return Err(CliError::config("database and query cameras differ"));
            }
            let keep: Vec<usize> = (0..full.frames.len()).step_by((*stride).max(1)).collect();
            db = full.subset(&keep);
            MapSource::Database(&db)
        }
    };
    let est = localize::run_sequence_traced(&source, &queries.camera, &queries, &prior, &opts, |fe, trace| {
        if !debug || debug_err.is_some() {
            return;
        }
        if let (Some(r), Some(rec)) = (trace.references.first(), trace.records.first()) {
            let stem = format!("{:06}", fe.frame);
            if let Err(e) = write_match_debug(&debug_dir, &stem, &queries.frames[fe.frame].image, &r.rgb, rec) {
                debug_err = Some(CliError::io(&debug_dir, e));
            }
        }
    })
    .map_err(|e| CliError::config(e.to_string()))?;
    if let Some(e) = debug_err {
        return Err(e);
    }
    let traj_path = out.join(layout::TRAJECTORY);
    let poses = est.poses();
    tum::write_trajectory(&traj_path, "estimated camera-to-world poses", poses.iter().map(|(t, p)| (*t, p)))
        .map_err(|e| CliError::io(&traj_path, e))?;
    let log = out.join(layout::FRAMES);
    est.write_jsonl(&log).map_err(io(&log))?;
    let failed = est.failures();
    if 2 * failed > est.frames.len() {
        return Err(CliError::LocalizationFailed { failed, total: est.frames.len() });
    }
    Ok(est)
}

#[derive(Deserialize)]
struct LogStatus {
    status: Status,
}

/// Statuses from a `frames.jsonl` log.
pub fn read_statuses(path: &Path) -> Result<Vec<Status>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<LogStatus>(l).map(|s| s.status).map_err(|e| CliError::io(path, e)))
        .collect()
}

/// Scores an estimate against ground truth and writes the report files.
pub fn cmd_eval(
    cfg: &RunConfig,
    est_path: &Path,
    gt_path: &Path,
    frames_log: Option<&Path>,
    storage: Option<(&Path, &Path)>,
    out: &Path,
) -> Result<EvalReport, CliError> {
    let est = tum::read_trajectory(est_path).map_err(|e| CliError::io(est_path, e))?;
    let gt = tum::read_trajectory(gt_path).map_err(|e| CliError::io(gt_path, e))?;
    let statuses = match frames_log {
        Some(p) => read_statuses(p)?,
        None => Vec::new(),
    };
    let storage: Option<StorageReport> = match storage {
        Some((f, d)) => Some(eval::storage_report(f, d).map_err(|e| CliError::io(f, e))?),
        None => None,
    };
    let report = eval::evaluate(&est, &statuses, &gt, cfg.eval.max_dt, cfg.eval.alignment, storage)
        .map_err(|e| CliError::config(e.to_string()))?;
    eval::emit_report(&report, out).map_err(|e| CliError::io(out, e))?;
    Ok(report)
}
