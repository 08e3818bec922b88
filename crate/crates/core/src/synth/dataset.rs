use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::field::{render_image, RadianceField, RenderOptions};
use crate::geom::{tum, CameraModel, Pose};
use crate::image::RgbImage;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub pose: Pose,
    pub image: RgbImage,
    /// Set when blur was injected during generation; not persisted.
    pub blurred: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub query: Vec<usize>,
}

impl Splits {
    /// Every frame in `train` except the evenly spaced `holdout` ones.
    pub fn with_holdout(n: usize, holdout: Vec<usize>) -> Self {
        Self {
            train: (0..n).filter(|i| !holdout.contains(i)).collect(),
            holdout,
            query: Vec::new(),
        }
    }

    pub fn all_query(n: usize) -> Self {
        Self {
            query: (0..n).collect(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub camera: CameraModel,
    pub frames: Vec<Frame>,
    pub splits: Splits,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidDataset(m));
        for w in self.frames.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return bad(format!("timestamps not increasing at {}", w[1].timestamp));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.image.width != self.camera.width as usize || f.image.height != self.camera.height as usize {
                return bad(format!("frame {i} does not match the camera size"));
            }
        }
        let n = self.frames.len();
        for idx in [&self.splits.train, &self.splits.holdout, &self.splits.query] {
            if idx.iter().any(|i| *i >= n) {
                return bad("split index out of range".into());
            }
        }
        Ok(())
    }

    /// Frames at `keep` (ascending original indices) with splits remapped.
    pub fn subset(&self, keep: &[usize]) -> Dataset {
        let remap = |ids: &[usize]| ids.iter().filter_map(|i| keep.iter().position(|k| k == i)).collect();
        Dataset {
            camera: self.camera,
            frames: keep.iter().map(|&i| self.frames[i].clone()).collect(),
            splits: Splits {
                train: remap(&self.splits.train),
                holdout: remap(&self.splits.holdout),
                query: remap(&self.splits.query),
            },
        }
    }

    pub fn trajectory(&self) -> Vec<(f64, Pose)> {
        self.frames.iter().map(|f| (f.timestamp, f.pose)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetOptions {
    pub noise_sigma: f64,
    pub blur_fraction: f64,
    /// Box-blur width in pixels.
    pub blur_kernel: usize,
    pub seed: u64,
    pub render: RenderOptions,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            blur_fraction: 0.0,
            blur_kernel: 5,
            seed: 0,
            render: RenderOptions::default(),
        }
    }
}

fn frame_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_mul(0xd1b5_4a32_d192_ed03) ^ 0x5bd1e995
}

/// Renders every trajectory pose from the ground-truth field, then adds
/// clamped Gaussian noise and box-blurs a seeded random subset of exactly
/// `round(blur_fraction·n)` frames. All frames land in the `train` split.
pub fn make_dataset(
    gt: &RadianceField,
    cam: &CameraModel,
    trajectory: &[(f64, Pose)],
    opts: &DatasetOptions,
) -> Result<Dataset, SynthError> {
    cam.validate().map_err(|e| SynthError::InvalidDataset(e.to_string()))?;
    opts.render.validate().map_err(SynthError::InvalidDataset)?;
    if !(opts.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&opts.blur_fraction) {
        return Err(SynthError::InvalidDataset("bad noise or blur settings".into()));
    }
    let n = trajectory.len();
    let mut blurred = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let n_blur = (opts.blur_fraction * n as f64).round() as usize;
    for &i in order.iter().take(n_blur) {
        blurred[i] = true;
    }

    let frames: Vec<Frame> = trajectory
        .par_iter()
        .enumerate()
        .map(|(i, (t, pose))| {
            let mut img = render_image(gt, cam, pose, &opts.render).rgb;
            if opts.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(opts.seed, i));
                let normal = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
                for v in &mut img.data {
                    *v += normal.sample(&mut rng) as f32;
                }
                img.clamp01();
            }
            if blurred[i] {
                img = img.box_blur(opts.blur_kernel);
            }
            Frame {
                timestamp: *t,
                pose: *pose,
                image: img,
                blurred: blurred[i],
            }
        })
        .collect();
    let ds = Dataset {
        camera: *cam,
        splits: Splits {
            train: (0..n).collect(),
            ..Default::default()
        },
        frames,
    };
    ds.validate()?;
    Ok(ds)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn image_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join("images").join(format!("{index:06}.ppm"))
}

/// Writes `camera.json`, `poses.txt`, `images/%06d.ppm` and `splits.json`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), SynthError> {
    ds.validate()?;
    std::fs::create_dir_all(dir.join("images")).map_err(io_err(dir))?;
    let cam_path = dir.join("camera.json");
    let cam = serde_json::to_string_pretty(&ds.camera).expect("camera serializes");
    std::fs::write(&cam_path, cam + "\n").map_err(io_err(&cam_path))?;
    tum::write_trajectory(
        &dir.join("poses.txt"),
        "camera-to-world poses, camera axes x right / y down / z forward",
        ds.frames.iter().map(|f| (f.timestamp, &f.pose)),
    )?;
    ds.frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| f.image.save_ppm(&image_path(dir, i)).map(|_| ()))?;
    let split_path = dir.join("splits.json");
    let splits = serde_json::to_string_pretty(&ds.splits).expect("splits serialize");
    std::fs::write(&split_path, splits + "\n").map_err(io_err(&split_path))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let read_json = |name: &str| -> Result<String, SynthError> {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(io_err(&p))
    };
    let camera: CameraModel = serde_json::from_str(&read_json("camera.json")?).map_err(|source| SynthError::Json {
        path: dir.join("camera.json").display().to_string(),
        source,
    })?;
    camera.validate().map_err(|e| SynthError::InvalidDataset(e.to_string()))?;
    let splits: Splits = serde_json::from_str(&read_json("splits.json")?).map_err(|source| SynthError::Json {
        path: dir.join("splits.json").display().to_string(),
        source,
    })?;
    let poses = tum::read_trajectory(&dir.join("poses.txt"))?;
    let frames = poses
        .par_iter()
        .enumerate()
        .map(|(i, (t, pose))| {
            Ok(Frame {
                timestamp: *t,
                pose: *pose,
                image: RgbImage::load_ppm(&image_path(dir, i))?,
                blurred: false,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let ds = Dataset { camera, frames, splits };
    ds.validate()?;
    Ok(ds)
}
