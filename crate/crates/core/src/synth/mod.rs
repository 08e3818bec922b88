//! Synthetic stand-in for the capture rig: procedural scenes, ground-truth
//! trajectories, rendered datasets with injected noise and blur, and the
//! blur-rejection preprocessing step.

mod blur;
mod dataset;
mod scene;
mod trajectory;

pub use blur::{blur_score, filter_blurred, BlurFilter};
pub use dataset::{load_dataset, make_dataset, save_dataset, Dataset, DatasetOptions, Frame, Splits};
pub use scene::{default_scene, voxelize_scene, Primitive, SceneSpec, Shape};
pub use trajectory::{generate_trajectory, path_length, TrajectoryParams, FRAME_INTERVAL_S};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene bounding box is empty")]
    EmptyScene,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("bad trajectory parameters: {0}")]
    BadParams(String),
    #[error("image is smaller than 3x3")]
    TooSmall,
    #[error("blur filter removed every image")]
    AllFiltered,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
    #[error(transparent)]
    Tum(#[from] crate::geom::tum::TumError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}
