//! PFM disparity maps. Only the grayscale "Pf" variant is supported; the
//! header is `Pf\n<width> <height>\n<scale>\n` followed by 32-bit floats in
//! bottom-up row order, little-endian when the scale is negative.

use super::{read_bytes, write_bytes, DenseImage, HeaderReader, IoError};
use crate::energy::INVALID_DISPARITY;
use std::path::Path;

/// Loads a disparity map. Non-finite and non-positive samples become the
/// invalid sentinel -1: disparity producers encode missing matches as zero,
/// negative, or infinite values, and this pipeline represents them all the
/// same way.
pub fn load_pfm(path: impl AsRef<Path>) -> Result<DenseImage, IoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut header = HeaderReader::new(&bytes, false);
    match header.token() {
        Some("Pf") => {}
        Some("PF") => {
            return Err(IoError::malformed(
                path,
                "color PFM (\"PF\") is not supported, expected grayscale \"Pf\"",
            ));
        }
        _ => return Err(IoError::malformed(path, "not a PFM file, missing \"Pf\" magic")),
    }
    let dim = |token: Option<&str>, name: &str| -> Result<usize, IoError> {
        token
            .and_then(|t| t.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| IoError::malformed(path, format!("bad {name} in header")))
    };
    let width = dim(header.token(), "width")?;
    let height = dim(header.token(), "height")?;
    let scale: f64 = header
        .token()
        .and_then(|t| t.parse().ok())
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| IoError::malformed(path, "bad scale in header"))?;
    let little_endian = scale < 0.0;
    let payload = header
        .payload()
        .ok_or_else(|| IoError::malformed(path, "missing payload separator"))?;
    let expected = width * height * 4;
    if payload.len() < expected {
        return Err(IoError::malformed(
            path,
            format!("truncated payload: {} bytes, expected {expected}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(IoError::malformed(
            path,
            format!("{} trailing bytes after the payload", payload.len() - expected),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| {
            let raw = [c[0], c[1], c[2], c[3]];
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            if v.is_finite() && v > 0.0 {
                v
            } else {
                INVALID_DISPARITY as f32
            }
        })
        .collect();
    DenseImage::new(width, height, data)
}

/// Writes `image` as little-endian grayscale PFM (scale -1), rows bottom-up
/// exactly as stored.
pub fn save_pfm(path: impl AsRef<Path>, image: &DenseImage) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut bytes =
        format!("Pf\n{} {}\n-1.0\n", image.width(), image.height()).into_bytes();
    bytes.reserve(image.values().len() * 4);
    for v in image.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}
