//! Field file layout (little-endian):
//!
//! ```text
//! "RFLD"  u32 version  f32×6 bbox (min xyz, max xyz)  u32×3 dims
//! f32×N density (x fastest)  f32×3N color (rgb per voxel)  u32 CRC32
//! ```
//! The CRC covers every byte before it.

use std::path::Path;

use super::{FieldError, RadianceField};

pub const FIELD_MAGIC: &[u8; 4] = b"RFLD";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 24 + 12;

/// Exact file size of a field with the given dimensions.
pub fn field_file_size(dims: [usize; 3]) -> u64 {
    let n = dims.iter().product::<usize>() as u64;
    HEADER_LEN as u64 + n * 16 + 4
}

pub fn encode_field(field: &RadianceField) -> Vec<u8> {
    let mut buf = Vec::with_capacity(field_file_size(field.dims()) as usize);
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    for v in field.bbox_min().iter().chain(field.bbox_max().iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for d in field.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for d in &field.density {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for c in field.color.iter().flatten() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_field(bytes: &[u8]) -> Result<RadianceField, FieldError> {
    if bytes.len() < 8 || &bytes[..4] != FIELD_MAGIC {
        return Err(FieldError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FIELD_VERSION {
        return Err(FieldError::VersionUnsupported(version));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(FieldError::Malformed("header truncated".into()));
    }
    let body = bytes.len() - 4;
    if crc32fast::hash(&bytes[..body]) != u32_at(body) {
        return Err(FieldError::ChecksumMismatch);
    }
    let bbox_min = [f32_at(8), f32_at(12), f32_at(16)];
    let bbox_max = [f32_at(20), f32_at(24), f32_at(28)];
    let dims = [u32_at(32) as usize, u32_at(36) as usize, u32_at(40) as usize];
    if field_file_size(dims) != bytes.len() as u64 {
        return Err(FieldError::Malformed(format!(
            "dims {dims:?} imply {} bytes, file has {}",
            field_file_size(dims),
            bytes.len()
        )));
    }
    let n = dims.iter().product::<usize>();
    let density = (0..n).map(|i| f32_at(HEADER_LEN + 4 * i)).collect();
    let color_off = HEADER_LEN + 4 * n;
    let color = (0..n)
        .map(|i| {
            let o = color_off + 12 * i;
            [f32_at(o), f32_at(o + 4), f32_at(o + 8)]
        })
        .collect();
    RadianceField::from_parts(bbox_min, bbox_max, dims, density, color)
        .map_err(|e| FieldError::Malformed(e.to_string()))
}

/// Writes the field and returns the number of bytes written.
pub fn save_field(field: &RadianceField, path: &Path) -> Result<u64, FieldError> {
    let bytes = encode_field(field);
    std::fs::write(path, &bytes).map_err(|source| FieldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes.len() as u64)
}

pub fn load_field(path: &Path) -> Result<RadianceField, FieldError> {
    let bytes = std::fs::read(path).map_err(|source| FieldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_field(&bytes)
}
