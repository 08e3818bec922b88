use serde::{Deserialize, Serialize};

use super::{FeatureError, Keypoint, PATCH_MARGIN};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FastOptions {
    pub max_count: usize,
    /// Intensity difference on the [0, 1] scale.
    pub fast_threshold: f32,
    pub nms_radius: usize,
}

impl Default for FastOptions {
    fn default() -> Self {
        Self {
            max_count: 1000,
            fast_threshold: 0.04,
            nms_radius: 3,
        }
    }
}

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];
const ARC: usize = 9;

/// FAST-9 segment test. Returns the corner score (sum of excess absolute
/// differences over the qualifying side) or `None`.
fn corner_score(img: &GrayImage, x: usize, y: usize, t: f32) -> Option<f32> {
    let p = img.get(x, y);
    let mut ring = [0f32; 16];
    for (k, (dx, dy)) in CIRCLE.iter().enumerate() {
        ring[k] = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
    }
    // quick rejection on the four compass points: a 9-arc covers at least two
    let compass = [ring[0], ring[4], ring[8], ring[12]];
    let bright = compass.iter().filter(|v| **v > p + t).count();
    let dark = compass.iter().filter(|v| **v < p - t).count();
    if bright < 2 && dark < 2 {
        return None;
    }
    let mut best: Option<f32> = None;
    for sign in [1.0f32, -1.0] {
        let hit = |v: f32| sign * (v - p) > t;
        let mut run = 0;
        let mut found = false;
        for k in 0..32 {
            if hit(ring[k % 16]) {
                run += 1;
                if run >= ARC {
                    found = true;
                    break;
                }
            } else {
                run = 0;
            }
        }
        if found {
            let s: f32 = ring.iter().map(|v| (sign * (v - p) - t).max(0.0)).sum();
            best = Some(best.map_or(s, |b: f32| b.max(s)));
        }
    }
    best
}

/// FAST-9 corners with score-based non-maximum suppression, at most
/// `max_count` of them ordered by descending score (ties by row, then
/// column). Only positions at least [`PATCH_MARGIN`] from every edge are
/// considered.
pub fn detect_keypoints(img: &GrayImage, opts: &FastOptions) -> Result<Vec<Keypoint>, FeatureError> {
    if img.width < 32 || img.height < 32 {
        return Err(FeatureError::TooSmall(img.width, img.height));
    }
    let (w, h) = (img.width, img.height);
    let m = PATCH_MARGIN;
    let mut score = vec![0f32; w * h];
    let mut cands = Vec::new();
    for y in m..h - m {
        for x in m..w - m {
            if let Some(s) = corner_score(img, x, y, opts.fast_threshold) {
                score[y * w + x] = s;
                cands.push((x, y));
            }
        }
    }
    // greedy suppression in (score desc, y, x) order against accepted corners
    let key = |&(x, y): &(usize, usize)| (std::cmp::Reverse(score[y * w + x].to_bits()), y, x);
    cands.sort_by_key(key);
    let r = opts.nms_radius as isize;
    let mut taken = vec![false; w * h];
    let mut kps = Vec::new();
    for (x, y) in cands {
        let blocked = (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize && taken[ny as usize * w + nx as usize]
            })
        });
        if blocked {
            continue;
        }
        taken[y * w + x] = true;
        kps.push(Keypoint {
            x: x as f64,
            y: y as f64,
            score: score[y * w + x] as f64,
        });
        if kps.len() == opts.max_count {
            break;
        }
    }
    Ok(kps)
}
