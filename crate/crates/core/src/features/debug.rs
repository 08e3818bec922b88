use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Keypoint, Match};
use crate::image::{self, ImageError, RgbImage};

/// One correspondence in pixel coordinates, as written to the debug JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub query: [f64; 2],
    pub reference: [f64; 2],
    pub distance: u32,
    pub ratio: f64,
    pub inlier: bool,
}

pub fn match_records(q: &[Keypoint], r: &[Keypoint], matches: &[Match], inliers: &[bool]) -> Vec<MatchRecord> {
    matches
        .iter()
        .enumerate()
        .map(|(k, m)| MatchRecord {
            query: [q[m.query].x, q[m.query].y],
            reference: [r[m.reference].x, r[m.reference].y],
            distance: m.distance,
            ratio: m.ratio,
            inlier: inliers.get(k).copied().unwrap_or(false),
        })
        .collect()
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), rgb: [f32; 3]) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=n {
        let t = s as f64 / n as f64;
        let x = (a.0 + t * (b.0 - a.0)).round();
        let y = (a.1 + t * (b.1 - a.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width && (y as usize) < img.height {
            img.set(x as usize, y as usize, rgb);
        }
    }
}

fn mark(img: &mut RgbImage, p: (f64, f64), rgb: [f32; 3]) {
    line(img, (p.0 - 2.0, p.1), (p.0 + 2.0, p.1), rgb);
    line(img, (p.0, p.1 - 2.0), (p.0, p.1 + 2.0), rgb);
}

/// Writes `<stem>.json` with the correspondences and `<stem>.ppm` with the
/// query (left) and reference (right) side by side. Matches are drawn
/// green, consensus inliers red.
pub fn write_match_debug(
    dir: &Path,
    stem: &str,
    query: &RgbImage,
    reference: &RgbImage,
    records: &[MatchRecord],
) -> Result<(), ImageError> {
    let w = query.width + reference.width;
    let h = query.height.max(reference.height);
    let mut canvas = RgbImage::new(w, h);
    for y in 0..query.height {
        for x in 0..query.width {
            canvas.set(x, y, query.get(x, y));
        }
    }
    for y in 0..reference.height {
        for x in 0..reference.width {
            canvas.set(query.width + x, y, reference.get(x, y));
        }
    }
    let off = query.width as f64;
    for r in records.iter().filter(|r| !r.inlier).chain(records.iter().filter(|r| r.inlier)) {
        let rgb = if r.inlier { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let a = (r.query[0], r.query[1]);
        let b = (r.reference[0] + off, r.reference[1]);
        line(&mut canvas, a, b, rgb);
        mark(&mut canvas, a, rgb);
        mark(&mut canvas, b, rgb);
    }
    canvas.save_ppm(&dir.join(format!("{stem}.ppm")))?;
    let json = serde_json::to_vec_pretty(records).expect("records serialize");
    image::write_file(&dir.join(format!("{stem}.json")), &json)?;
    Ok(())
}
