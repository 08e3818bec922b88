use super::{Descriptor, Keypoint, PATCH_MARGIN};
use crate::image::GrayImage;

/// Gaussian pre-smoothing applied before the intensity tests.
const SMOOTHING_SIGMA: f32 = 2.0;

/// Descriptors for the keypoints whose patch fits inside the image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Described {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    /// Input indices of keypoints dropped for violating the margin.
    pub dropped: Vec<usize>,
}

/// Upright BRIEF-256 over a 31×31 patch of the smoothed image.
pub fn compute_descriptors(img: &GrayImage, keypoints: &[Keypoint]) -> Described {
    let smooth = img.gaussian_blur(SMOOTHING_SIGMA);
    let mut out = Described::default();
    let m = PATCH_MARGIN as f64;
    for (i, kp) in keypoints.iter().enumerate() {
        let (x, y) = (kp.x.round(), kp.y.round());
        if x < m || y < m || x > (img.width - 1) as f64 - m || y > (img.height - 1) as f64 - m {
            out.dropped.push(i);
            continue;
        }
        let (x, y) = (x as isize, y as isize);
        let at = |dx: i8, dy: i8| smooth.get((x + dx as isize) as usize, (y + dy as isize) as usize);
        let mut d = Descriptor::default();
        for (bit, p) in BRIEF_PATTERN.iter().enumerate() {
            if at(p[0], p[1]) < at(p[2], p[3]) {
                d.0[bit / 64] |= 1 << (bit % 64);
            }
        }
        out.keypoints.push(*kp);
        out.descriptors.push(d);
    }
    out
}

// Generated once by drawing integer offsets from N(0, (31/5)²) clamped to
// ±15 with ChaCha8Rng seeded with 0x42524945, rejecting identical endpoints.
/// BRIEF sampling pairs: (ax, ay, bx, by) relative to the keypoint.
pub const BRIEF_PATTERN: [[i8; 4]; 256] = [
    [-4, 0, 5, 7], [-10, 2, -4, 2], [-13, -9, 6, 3], [-9, -9, -1, 3],
    [4, -5, 10, 8], [3, -4, 1, 0], [-15, 3, 5, 8], [5, -2, -7, -3],
    [-5, -5, -4, -11], [4, 1, 4, -4], [9, 1, 14, 2], [-1, 0, 3, -10],
    [-8, 0, 1, -8], [7, -2, 2, 2], [2, -3, -2, -12], [3, -7, 2, -4],
    [-4, 3, 6, -1], [0, -12, -7, 0], [-1, 3, -4, -1], [-1, 5, -13, 3],
    [8, 6, 8, 2], [-5, -7, 4, -5], [1, 2, 6, -10], [6, -7, -11, -10],
    [-12, 6, -2, 12], [5, 10, -4, 2], [-1, 0, -2, 0], [-1, -7, 0, 2],
    [4, -3, 0, 0], [7, 7, -10, 4], [11, 2, 2, -1], [-4, -10, -6, -4],
    [10, -4, 1, 1], [-13, 0, 3, -6], [3, -6, -9, -2], [5, 5, 3, 1],
    [1, -3, 12, 5], [3, 0, 0, 5], [12, -5, 15, 7], [3, 0, -7, -2],
    [-7, -1, -9, -3], [-3, -9, 6, 4], [9, -2, -2, 6], [8, -6, -1, -5],
    [6, 4, -7, 4], [3, -1, 15, 1], [5, 4, 9, 4], [2, -2, 6, 0],
    [-3, 5, 6, 6], [-4, -10, -1, 1], [11, 1, 11, 5], [4, 5, -1, 0],
    [4, -12, 1, -4], [-4, 9, -1, 1], [8, 4, 3, 1], [5, -5, 4, -13],
    [2, -9, -3, 4], [-4, -5, -5, 4], [-5, 0, -7, -1], [5, -8, -1, -3],
    [-3, 7, 2, -6], [4, 0, -6, 2], [0, -5, -8, -1], [-1, 3, 0, 3],
    [4, -12, 1, 6], [-5, 0, -1, -8], [2, -7, 3, 7], [-4, -3, -6, -13],
    [-6, -9, 0, -3], [5, 0, -3, 4], [2, -5, 4, -11], [1, 12, -7, -14],
    [-11, -2, -1, 4], [5, 4, -2, -6], [-5, -3, 1, 5], [9, 6, -7, 8],
    [0, 4, -3, -7], [0, 3, -12, 4], [3, 8, 2, 1], [-1, 5, -13, -3],
    [2, -12, 8, -2], [2, -11, -8, -2], [3, -1, 0, -5], [-6, 0, -4, -3],
    [1, -1, -4, 0], [3, -4, -7, 2], [9, 0, 11, -4], [1, 12, -3, 5],
    [-5, -5, 3, 6], [1, 0, 10, 2], [-4, -7, 2, -7], [2, -2, 3, -1],
    [-6, -5, 2, -10], [-6, 3, -3, -12], [-6, 2, 5, 6], [-9, 3, 5, 8],
    [8, 1, 2, 4], [5, -4, -8, 5], [0, -2, -1, 9], [1, -3, -8, 1],
    [4, -10, 1, -1], [7, -1, 8, 8], [9, 7, -4, 4], [-11, 13, -5, 5],
    [1, -1, 4, 6], [-3, 0, -9, 4], [1, -2, 2, 5], [-6, 0, 4, 15],
    [-3, -5, 1, -2], [-4, -11, 2, 1], [-7, 2, 3, -6], [5, -1, 3, 14],
    [1, 0, 2, -3], [-14, -10, -5, 10], [-5, 7, -1, 2], [2, 3, -11, 0],
    [2, 4, 2, -10], [-3, -3, -6, -1], [-5, -1, 4, 7], [0, 4, 6, 5],
    [11, -5, 1, -2], [6, 0, 5, 3], [7, -3, -5, 7], [-9, 9, -3, -4],
    [5, -4, 2, -2], [0, -11, 4, -2], [-2, -6, 6, 5], [7, 4, -10, -5],
    [12, -8, 3, -7], [-6, -5, -6, 12], [5, -9, 5, 6], [-3, 3, -5, -6],
    [13, 12, -3, -7], [-12, -1, 2, -5], [7, 1, 6, -3], [-2, 4, -8, 0],
    [-4, 7, -5, 1], [-3, 4, 2, -9], [3, 6, -4, -2], [1, 3, 3, 5],
    [5, 0, 4, -4], [2, -7, -3, 11], [2, -7, 7, 10], [10, -1, 4, -7],
    [-4, -8, -4, 3], [0, 0, 4, 5], [0, -3, 4, 15], [-6, 0, -6, -9],
    [-10, 2, 7, 12], [3, -6, 9, 15], [-2, 6, -5, -2], [-4, 8, -1, -2],
    [9, 4, 5, -8], [-8, -5, 4, 11], [0, 4, 2, -1], [-6, -4, 4, 8],
    [5, 4, -9, 9], [-10, -4, 6, -5], [-5, -4, -3, 0], [7, 2, 5, -1],
    [1, -4, -14, 1], [0, 13, -4, -1], [14, 2, -8, -9], [14, 12, -9, -5],
    [5, -10, -8, 3], [-2, -8, 14, -12], [-6, 2, -3, 1], [-9, -7, 3, 4],
    [-4, -3, 15, -5], [0, -8, 4, 0], [7, -1, 7, -3], [-1, -5, -5, 0],
    [-14, 2, 1, -10], [8, 4, -3, -8], [3, 8, 1, -3], [-1, -8, 0, -3],
    [9, -1, 8, 4], [-7, -6, -4, -10], [-3, 8, 1, 12], [-6, -1, 10, -15],
    [-5, 15, 1, 9], [-1, -12, 1, -2], [-3, 8, 11, -4], [-2, 1, 1, -5],
    [-3, -6, 0, -3], [5, -1, 1, 7], [3, 0, 7, 2], [15, 0, 2, 0],
    [-12, 1, -5, 8], [-9, -5, -10, 2], [-1, 9, -15, 5], [8, -6, 2, -5],
    [12, 1, -5, -2], [5, 3, 1, 10], [0, 12, -8, 4], [2, -7, 1, 1],
    [12, 3, -6, 0], [11, -2, -7, 2], [8, -6, 4, 2], [2, 1, -5, 9],
    [-13, 6, -14, -3], [6, -1, 6, 6], [-8, -6, 0, -2], [-1, 0, 9, 5],
    [-2, 9, 4, -3], [4, -7, 5, 7], [5, -15, -7, -1], [9, -10, 0, 2],
    [2, 6, 4, -15], [5, 8, -3, -2], [-7, -8, 3, -4], [6, -7, 3, 0],
    [2, 6, -6, 7], [6, 0, -3, -6], [0, 7, -8, 0], [-2, -5, -2, 5],
    [-5, -3, -8, -3], [6, 10, -1, -13], [10, 2, -2, 3], [2, 1, -4, 2],
    [4, -3, -5, 2], [-7, -2, 6, -3], [2, -1, -6, -5], [11, -5, -4, -6],
    [3, 4, -1, 2], [1, 6, -3, -1], [-1, 5, -13, 1], [5, 9, -8, -1],
    [0, 7, -12, 1], [1, 4, 2, -2], [4, 10, 8, 15], [-2, -5, 3, 0],
    [10, -10, -1, -6], [6, -3, 3, 5], [0, -3, -6, -2], [2, 0, 12, -6],
    [7, 4, -6, 6], [-11, -2, 1, -8], [7, -3, -5, -15], [4, 1, 11, 1],
    [6, 4, 1, -5], [6, 2, 1, -4], [-2, 9, -1, -4], [4, 1, 0, -2],
    [3, -1, -2, -8], [-3, -3, -1, 3], [-6, 1, 7, -2], [-1, -8, -8, -11],
    [3, 2, -10, -6], [3, -6, -8, -1], [0, 0, -3, 5], [-5, -10, 4, -6],
    [7, 7, 4, 3], [-1, 6, -2, -4], [-9, 2, -2, 4], [4, -10, 0, 8],
];
