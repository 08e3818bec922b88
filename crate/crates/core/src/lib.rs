//! Visual localization against a voxel radiance-field map.
//!
//! The map is an explicit radiance field trained from posed images. To
//! localize a query image, reference views are rendered (color and depth)
//! around a prior pose, matched to the query with FAST/BRIEF features, lifted
//! to 3D through the rendered depth, and the query pose is solved with P3P
//! RANSAC followed by Gauss-Newton refinement on the consensus set.

pub mod eval;
pub mod field;
pub mod features;
pub mod geom;
pub mod image;
pub mod localize;
pub mod synth;

pub use field::{RadianceField, RenderOptions, RenderedView, TrainConfig};
pub use geom::{rotation_error, CameraModel, Pose, Ray};
pub use eval::{EvalReport, StorageReport};
pub use features::{Descriptor, Keypoint, Match};
pub use image::{GrayImage, RgbImage};
pub use localize::{LocalizationResult, LocalizeOptions, MapSource, Status, TrajectoryEstimate};
pub use synth::{Dataset, SceneSpec};
