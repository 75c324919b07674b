//! Semantic score tensors. The format is an ASCII header `SEMF\n<width>
//! <height> <classes>\n` followed by little-endian 32-bit floats, top row
//! first, all class scores of a pixel stored together.

use super::{read_bytes, write_bytes, HeaderReader, IoError, ScoreVolume};
use std::path::Path;

/// Per-pixel score sums within this distance of 1 are taken as already
/// normalized and left untouched, which keeps save/load round trips
/// bit-exact on well-formed data. The tolerance is wide enough to absorb
/// the accumulation error of summing single-precision scores.
const NORMALIZED_TOLERANCE: f64 = 1e-5;

/// How stored values are turned into per-pixel probability scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreIngest {
    /// Values are probabilities: non-negative, renormalized to sum 1 when
    /// the stored sum drifts beyond [`NORMALIZED_TOLERANCE`].
    Probabilities,
    /// Values are raw network outputs: a softmax is applied per pixel.
    Logits,
}

pub fn load_scores(path: impl AsRef<Path>, ingest: ScoreIngest) -> Result<ScoreVolume, IoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut header = HeaderReader::new(&bytes, false);
    if header.token() != Some("SEMF") {
        return Err(IoError::malformed(path, "not a score tensor, missing \"SEMF\" magic"));
    }
    let mut dims = [0usize; 3];
    for (value, name) in dims.iter_mut().zip(["width", "height", "classes"]) {
        *value = header
            .token()
            .and_then(|t| t.parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| IoError::malformed(path, format!("bad {name} in header")))?;
    }
    let [width, height, classes] = dims;
    let payload = header
        .payload()
        .ok_or_else(|| IoError::malformed(path, "missing payload separator"))?;
    let expected = width * height * classes * 4;
    if payload.len() != expected {
        return Err(IoError::malformed(
            path,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }

    // File rows are top-down; flip into bottom-up order.
    let mut data = vec![0.0f32; width * height * classes];
    let row_len = width * classes;
    for file_row in 0..height {
        let y = height - 1 - file_row;
        for (i, chunk) in payload[file_row * row_len * 4..(file_row + 1) * row_len * 4]
            .chunks_exact(4)
            .enumerate()
        {
            data[y * row_len + i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
    }
    let mut volume = ScoreVolume::new(width, height, classes, data)?;

    for y in 0..height {
        for x in 0..width {
            match ingest {
                ScoreIngest::Probabilities => {
                    let mut sum = 0.0f64;
                    for k in 0..classes {
                        let s = volume.score(x, y, k);
                        if !(s.is_finite() && s >= 0.0) {
                            return Err(IoError::malformed(
                                path,
                                format!("score {s} for class {k} at pixel ({x}, {y})"),
                            ));
                        }
                        sum += s as f64;
                    }
                    if sum <= 0.0 {
                        return Err(IoError::malformed(
                            path,
                            format!("all-zero score vector at pixel ({x}, {y})"),
                        ));
                    }
                    if (sum - 1.0).abs() > NORMALIZED_TOLERANCE {
                        for k in 0..classes {
                            let s = volume.score(x, y, k);
                            volume.set_score(x, y, k, (s as f64 / sum) as f32);
                        }
                    }
                }
                ScoreIngest::Logits => {
                    let mut max = f64::NEG_INFINITY;
                    for k in 0..classes {
                        let s = volume.score(x, y, k);
                        if !s.is_finite() {
                            return Err(IoError::malformed(
                                path,
                                format!("logit {s} for class {k} at pixel ({x}, {y})"),
                            ));
                        }
                        max = max.max(s as f64);
                    }
                    let mut sum = 0.0f64;
                    let exps: Vec<f64> = (0..classes)
                        .map(|k| {
                            let e = ((volume.score(x, y, k) as f64) - max).exp();
                            sum += e;
                            e
                        })
                        .collect();
                    for (k, e) in exps.into_iter().enumerate() {
                        volume.set_score(x, y, k, (e / sum) as f32);
                    }
                }
            }
        }
    }
    Ok(volume)
}

/// Writes the volume exactly as stored, top row first.
pub fn save_scores(path: impl AsRef<Path>, volume: &ScoreVolume) -> Result<(), IoError> {
    let path = path.as_ref();
    let (width, height) = volume.dims();
    let classes = volume.classes();
    let mut bytes = format!("SEMF\n{width} {height} {classes}\n").into_bytes();
    bytes.reserve(volume.values().len() * 4);
    let row_len = width * classes;
    for file_row in 0..height {
        let y = height - 1 - file_row;
        for v in &volume.values()[y * row_len..(y + 1) * row_len] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tensor_bytes(width: usize, height: usize, classes: usize, values: &[f32]) -> Vec<u8> {
        let mut bytes = format!("SEMF\n{width} {height} {classes}\n").into_bytes();
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    fn load_from(bytes: &[u8], ingest: ScoreIngest) -> Result<ScoreVolume, IoError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.semf");
        std::fs::write(&path, bytes).unwrap();
        load_scores(&path, ingest)
    }

    #[test]
    fn stores_scores_as_given_when_already_normalized() {
        let v = load_from(
            &tensor_bytes(1, 1, 3, &[0.2, 0.5, 0.3]),
            ScoreIngest::Probabilities,
        )
        .unwrap();
        assert_eq!(
            [v.score(0, 0, 0), v.score(0, 0, 1), v.score(0, 0, 2)],
            [0.2, 0.5, 0.3]
        );
    }

    #[test]
    fn renormalizes_drifted_scores() {
        let v = load_from(
            &tensor_bytes(1, 1, 2, &[0.333, 0.666]),
            ScoreIngest::Probabilities,
        )
        .unwrap();
        let sum = v.score(0, 0, 0) as f64 + v.score(0, 0, 1) as f64;
        assert!((sum - 1.0).abs() < 1e-6, "{sum}");
        assert!((v.score(0, 0, 0) as f64 - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn file_rows_are_top_down() {
        // The file stores the image's top row first; in memory row 0 is the
        // bottom, so writing must start from the highest y.
        let mut asym = ScoreVolume::new(1, 2, 2, vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        asym.set_score(0, 1, 0, 0.9f32);
        asym.set_score(0, 1, 1, 0.1f32);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.semf");
        save_scores(&path, &asym).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = "SEMF\n1 2 2\n".len();
        let first = f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap());
        assert_eq!(first, 0.9, "top row must be written first");
    }

    #[test]
    fn softmax_ingest_normalizes_logits() {
        let v = load_from(&tensor_bytes(1, 1, 3, &[2.0, 0.0, -1.0]), ScoreIngest::Logits).unwrap();
        let sum: f64 = (0..3).map(|k| v.score(0, 0, k) as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(v.score(0, 0, 0) > v.score(0, 0, 1));
        assert!(v.score(0, 0, 1) > v.score(0, 0, 2));
        // Shift invariance of the softmax.
        let shifted =
            load_from(&tensor_bytes(1, 1, 3, &[102.0, 100.0, 99.0]), ScoreIngest::Logits).unwrap();
        for k in 0..3 {
            assert!((v.score(0, 0, k) - shifted.score(0, 0, k)).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_is_bit_exact_on_normalized_volumes() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..20 {
            let (w, h, k) = (rng.gen_range(1..10), rng.gen_range(1..10), rng.gen_range(2..6));
            let mut data = Vec::with_capacity(w * h * k);
            for _ in 0..w * h {
                // Build one-hot rows: exactly representable, so the stored
                // sum is exactly 1 and the loader leaves them untouched.
                let hot = rng.gen_range(0..k);
                for c in 0..k {
                    data.push(if c == hot { 1.0 } else { 0.0 });
                }
            }
            let volume = ScoreVolume::new(w, h, k, data).unwrap();
            let path = dir.path().join(format!("rt{i}.semf"));
            save_scores(&path, &volume).unwrap();
            let back = load_scores(&path, ScoreIngest::Probabilities).unwrap();
            assert_eq!(volume, back);
        }
    }

    #[test]
    fn rejects_bad_headers_and_sizes() {
        let err = load_from(b"SEMG\n1 1 1\n\x00\x00\x80?", ScoreIngest::Probabilities)
            .unwrap_err()
            .to_string();
        assert!(err.contains("magic"), "{err}");

        let err = load_from(&tensor_bytes(2, 1, 2, &[0.5, 0.5]), ScoreIngest::Probabilities)
            .unwrap_err()
            .to_string();
        assert!(err.contains("expected"), "{err}");

        let err = load_from(&tensor_bytes(1, 1, 2, &[-0.5, 1.5]), ScoreIngest::Probabilities)
            .unwrap_err()
            .to_string();
        assert!(err.contains("score"), "{err}");

        let err = load_from(&tensor_bytes(1, 1, 2, &[0.0, 0.0]), ScoreIngest::Probabilities)
            .unwrap_err()
            .to_string();
        assert!(err.contains("all-zero"), "{err}");
    }
}
