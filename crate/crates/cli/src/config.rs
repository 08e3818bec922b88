//! Run configuration, read from TOML. Every section and key is optional;
//! omitted values take the defaults below, which describe the reference
//! scenario used by the acceptance suite.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use fieldloc::eval::Alignment;
use fieldloc::field::TrainConfig;
use fieldloc::localize::LocalizeOptions;
use fieldloc::synth::{default_scene, SceneSpec, TrajectoryParams};
use fieldloc::CameraModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Field,
    Database,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel, CliError> {
        CameraModel::from_hfov(self.width, self.height, self.hfov_deg.to_radians())
            .map_err(|e| CliError::config(format!("camera: {e}")))
    }
}

/// A trajectory and how many poses to place on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub frames: usize,
    pub path: TrajectoryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// JSON scene file; the built-in scene when absent.
    pub file: Option<PathBuf>,
    /// Resolution of the ground-truth voxelization that renders all images.
    pub gt_dims: [usize; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            file: None,
            gt_dims: [64; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub dims: [usize; 3],
    /// Defaults to the scene bounds.
    pub bbox_min: Option<[f32; 3]>,
    pub bbox_max: Option<[f32; 3]>,
    pub init_density: f32,
    pub init_color: [f32; 3],
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            dims: [64; 3],
            bbox_min: None,
            bbox_max: None,
            init_density: 0.1,
            init_color: [0.5; 3],
        }
    }
}

/// Images the field is trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub camera: CameraConfig,
    pub paths: Vec<PathConfig>,
    pub noise_sigma: f64,
    pub blur_fraction: f64,
    pub blur_kernel: usize,
    /// Keep this fraction of the sharpest images...
    pub keep_fraction: Option<f64>,
    /// ...or every image whose blur score reaches this value.
    pub blur_threshold: Option<f64>,
}

fn ring(radius: f64, height: f64, frames: usize, start_angle: f64) -> PathConfig {
    PathConfig {
        frames,
        path: TrajectoryParams::Orbit {
            pivot: [0.0, 0.0, 0.4],
            radius,
            height,
            // a closed ring without a duplicated end pose
            length: 2.0 * PI * radius * (frames - 1) as f64 / frames as f64,
            start_angle,
        },
    }
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig {
                width: 128,
                height: 96,
                hfov_deg: 60.0,
            },
            paths: vec![ring(4.0, 0.8, 50, 0.0), ring(3.6, 2.0, 50, 0.06)],
            noise_sigma: 0.0,
            blur_fraction: 0.5,
            blur_kernel: 5,
            keep_fraction: None,
            blur_threshold: None,
        }
    }
}

/// Stored posed images for the database branch and the storage comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatabaseConfig {
    pub camera: CameraConfig,
    pub paths: Vec<PathConfig>,
    /// Localization uses every `stride`-th stored image.
    pub stride: usize,
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig {
                width: 320,
                height: 240,
                hfov_deg: 60.0,
            },
            paths: vec![ring(4.0, 1.0, 100, 0.0), ring(4.0, 1.8, 100, 0.03)],
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryConfig {
    pub camera: CameraConfig,
    pub path: PathConfig,
    pub noise_sigma: f64,
    /// Added to the first ground-truth center to form the initial prior.
    pub prior_offset: [f64; 3],
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig {
                width: 320,
                height: 240,
                hfov_deg: 60.0,
            },
            path: PathConfig {
                frames: 20,
                path: TrajectoryParams::Orbit {
                    pivot: [0.0, 0.0, 0.4],
                    radius: 4.0,
                    height: 1.4,
                    length: 10.0,
                    start_angle: 0.4,
                },
            },
            noise_sigma: 0.01,
            prior_offset: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub max_dt: f64,
    pub alignment: Alignment,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_dt: 0.02,
            alignment: Alignment::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub mode: Mode,
    /// `train` exits with code 4 below this holdout PSNR (dB).
    pub psnr_floor: f64,
    pub scene: SceneConfig,
    pub field: FieldConfig,
    pub map: MapConfig,
    pub database: DatabaseConfig,
    pub query: QueryConfig,
    pub train: TrainConfig,
    pub localize: LocalizeOptions,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            mode: Mode::Field,
            psnr_floor: 25.0,
            scene: SceneConfig::default(),
            field: FieldConfig::default(),
            map: MapConfig::default(),
            database: DatabaseConfig::default(),
            query: QueryConfig::default(),
            train: TrainConfig::default(),
            localize: LocalizeOptions::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; errors carry the file name, line, column and key.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::config(format!("{}: {}", origin.display(), e.to_string().trim_end())))?;
        cfg.validate().map_err(|m| CliError::config(format!("{}: {m}", origin.display())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.localize.validate().map_err(|e| format!("localize: {e}"))?;
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        if self.database.stride == 0 {
            return Err("database.stride: must be at least 1".into());
        }
        if self.query.path.frames == 0 {
            return Err("query.path.frames: must be at least 1".into());
        }
        if self.map.paths.iter().all(|p| p.frames == 0) {
            return Err("map.paths: no frames".into());
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneSpec, CliError> {
        match &self.scene.file {
            None => Ok(default_scene()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
            }
        }
    }
}
