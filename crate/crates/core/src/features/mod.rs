//! Corner detection, binary description and Hamming matching between the
//! query image and reference views.

mod brief;
mod debug;
mod fast;
mod matching;

pub use brief::{compute_descriptors, Described, BRIEF_PATTERN};
pub use debug::{match_records, write_match_debug, MatchRecord};
pub use fast::{detect_keypoints, FastOptions};
pub use matching::{match_descriptors, MatchOptions};

use thiserror::Error;

use crate::image::RgbImage;

/// Keypoints must stay this far (pixels) from every image edge so the
/// 31×31 descriptor patch fits.
pub const PATCH_MARGIN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image {0}x{1} is smaller than 32x32")]
    TooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query: usize,
    pub reference: usize,
    pub distance: u32,
    /// Best over second-best distance.
    pub ratio: f64,
}

/// Keypoints and descriptors of one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

/// Detects and describes an RGB image.
pub fn extract(image: &RgbImage, opts: &FastOptions) -> Result<Features, FeatureError> {
    let gray = image.to_gray();
    let kps = detect_keypoints(&gray, opts)?;
    let d = compute_descriptors(&gray, &kps);
    Ok(Features {
        keypoints: d.keypoints,
        descriptors: d.descriptors,
    })
}
