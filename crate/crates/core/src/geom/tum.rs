//! TUM trajectory text format: `timestamp tx ty tz qx qy qz qw` per line,
//! `#` comments, values written with nine significant digits.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use super::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum TumError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Formats `x` with nine significant digits in plain decimal notation.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-12..=15).contains(&exp) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn format_line(timestamp: f64, pose: &Pose) -> String {
    let [w, x, y, z] = pose.canonical_wxyz();
    let t = pose.translation;
    let mut s = String::new();
    for (i, v) in [timestamp, t.x, t.y, t.z, x, y, z, w].iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{}", sig9(*v));
    }
    s
}

pub fn parse_line(line: &str) -> Result<(f64, Pose), String> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() != 8 {
        return Err(format!("expected 8 fields, found {}", vals.len()));
    }
    let (qx, qy, qz, qw) = (vals[4], vals[5], vals[6], vals[7]);
    let n = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
    if !(n > 1e-6) {
        return Err("zero-norm quaternion".into());
    }
    Ok((
        vals[0],
        Pose::from_wxyz(qw, qx, qy, qz, Vec3::new(vals[1], vals[2], vals[3])),
    ))
}

pub fn write_trajectory<'a>(
    path: &Path,
    header: &str,
    poses: impl IntoIterator<Item = (f64, &'a Pose)>,
) -> Result<(), TumError> {
    let io = |source| TumError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    for h in header.lines() {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "# timestamp tx ty tz qx qy qz qw");
    for (t, p) in poses {
        out.push_str(&format_line(t, p));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>, TumError> {
    let f = std::fs::File::open(path).map_err(|source| TumError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| TumError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_line(trimmed).map_err(|msg| TumError::Parse { line: i + 1, msg })?);
    }
    Ok(out)
}
