//! Rigid transforms, the pinhole camera, ray generation and rotation metrics.
//!
//! Conventions used throughout the crate:
//! - a [`Pose`] is a camera-to-world transform;
//! - camera axes are x right, y down, z forward (the camera looks along +z);
//! - distances are meters, angles radians.

mod align;
mod camera;
mod pose;
pub mod tum;

pub use align::{rigid_fit, Similarity};
pub use camera::{CameraModel, Ray};
pub use pose::{rotation_error, Pose};

use thiserror::Error;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("pixel ({0}, {1}) is outside the image")]
    PixelOutOfBounds(f64, f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("degenerate point configuration")]
    Degenerate,
}
