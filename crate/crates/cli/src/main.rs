use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldloc_cli::commands::{self, layout, MapInput};
use fieldloc_cli::config::{Mode, RunConfig};
use fieldloc_cli::CliError;

/// Visual localization against a voxel radiance-field map.
#[derive(Debug, Parser)]
#[command(name = "fieldloc", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory (default: config `out`, else `run`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the map, database and query datasets.
    Synth,
    /// Train a field on the map dataset.
    Train(TrainArgs),
    /// Render color and depth images from a field.
    Render(RenderArgs),
    /// Localize the query sequence against a field or the image database.
    Localize(LocalizeArgs),
    /// Score an estimated trajectory against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory [default: <out>/map].
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output field file [default: <out>/field.rfld].
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Field file [default: <out>/field.rfld].
    #[arg(long)]
    field: Option<PathBuf>,
    /// A single pose as "tx ty tz qx qy qz qw".
    #[arg(long, conflicts_with = "trajectory", allow_hyphen_values = true)]
    pose: Option<String>,
    /// TUM trajectory file [default: <out>/query/poses.txt].
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Output directory [default: <out>/render].
    #[arg(long)]
    dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    /// Map source [default: config `mode`].
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Field file for field mode [default: <out>/field.rfld].
    #[arg(long)]
    field: Option<PathBuf>,
    /// Database directory for database mode [default: <out>/database].
    #[arg(long)]
    database: Option<PathBuf>,
    /// Use every N-th database image [default: config `database.stride`].
    #[arg(long)]
    stride: Option<usize>,
    /// Query dataset [default: <out>/query].
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Write a match visualization per frame under <out>/debug.
    #[arg(long)]
    debug_matches: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Estimated trajectory [default: <out>/trajectory_est.txt].
    #[arg(long)]
    est: Option<PathBuf>,
    /// Ground-truth trajectory [default: <out>/query/poses.txt].
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Per-frame log with statuses [default: frames.jsonl next to --est].
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Field file for the storage report [default: <out>/field.rfld].
    #[arg(long)]
    field: Option<PathBuf>,
    /// Database directory for the storage report [default: <out>/database].
    #[arg(long)]
    database: Option<PathBuf>,
}

fn or_default(p: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| out.join(name))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("run"));

    match &cli.command {
        Command::Synth => {
            let s = commands::cmd_synth(&cfg, &out)?;
            println!(
                "map: {} generated ({} blurred), {} retained, {} removed ({} of them blurred)",
                s.map_generated,
                s.map_blurred,
                s.map_retained,
                s.map_generated - s.map_retained,
                s.blurred_removed
            );
            println!("database: {} images; queries: {} frames", s.database_frames, s.query_frames);
        }
        Command::Train(a) => {
            let ds = or_default(&a.dataset, &out, layout::MAP);
            let field = or_default(&a.field, &out, layout::FIELD);
            let r = commands::cmd_train(&cfg, &ds, &field)?;
            println!(
                "{} iterations, holdout PSNR {:.2} dB (initial {:.2} dB)",
                r.iterations, r.holdout_psnr, r.initial_holdout_psnr
            );
            if r.iterations > 0 {
                commands::check_psnr_floor(&cfg, &r)?;
            }
        }
        Command::Render(a) => {
            let field_path = or_default(&a.field, &out, layout::FIELD);
            let field = commands::load_field(&field_path)?;
            let poses = match (&a.pose, &a.trajectory) {
                (Some(p), _) => vec![commands::parse_pose(p)?],
                (None, t) => {
                    let t = t.clone().unwrap_or_else(|| out.join(layout::QUERY).join("poses.txt"));
                    fieldloc::geom::tum::read_trajectory(&t)
                        .map_err(|e| CliError::io(&t, e))?
                        .into_iter()
                        .map(|(_, p)| p)
                        .collect()
                }
            };
            let cam = cfg.query.camera.model()?;
            let dir = or_default(&a.dir, &out, "render");
            let n = commands::cmd_render(&field, &cam, &poses, &dir, &cfg.localize.render)?;
            println!("rendered {n} frames into {}", dir.display());
        }
        Command::Localize(a) => {
            let mode = a.mode.unwrap_or(cfg.mode);
            let map = match mode {
                Mode::Field => MapInput::Field(or_default(&a.field, &out, layout::FIELD)),
                Mode::Database => MapInput::Database {
                    dir: or_default(&a.database, &out, layout::DATABASE),
                    stride: a.stride.unwrap_or(cfg.database.stride),
                },
            };
            let q = or_default(&a.queries, &out, layout::QUERY);
            let est = commands::cmd_localize(&cfg, &map, &q, &out, a.debug_matches)?;
            println!("{} frames, {} failed", est.frames.len(), est.failures());
        }
        Command::Eval(a) => {
            let est = or_default(&a.est, &out, layout::TRAJECTORY);
            let gt = a.gt.clone().unwrap_or_else(|| out.join(layout::QUERY).join("poses.txt"));
            let frames = a.frames.clone().or_else(|| {
                let p = est.with_file_name(layout::FRAMES);
                p.exists().then_some(p)
            });
            let field = or_default(&a.field, &out, layout::FIELD);
            let db = or_default(&a.database, &out, layout::DATABASE);
            // storage accounting when both artifacts are present or requested
            let storage = (a.field.is_some() || a.database.is_some() || (field.exists() && db.exists()))
                .then_some((field.as_path(), db.as_path()));
            let r = commands::cmd_eval(&cfg, &est, &gt, frames.as_deref(), storage, &out.join(layout::EVAL))?;
            println!(
                "ATE {:.4} m, mean rotation error {:.4} rad, {} frames, {} failed",
                r.ate_rmse_m, r.mean_rotation_error_rad, r.frame_count, r.failure_count
            );
            if let Some(s) = r.storage {
                println!("map {} bytes, database {} bytes, ratio {:.3}", s.map_bytes, s.db_bytes, s.ratio);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fieldloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
