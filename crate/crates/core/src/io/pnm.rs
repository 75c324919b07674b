//! PGM label maps and PPM color output. Both store the top image row first
//! and allow `#` comments in the header.

use super::{read_bytes, write_bytes, HeaderReader, IoError, LabelImage, RgbImage};
use std::path::Path;

/// Loads an 8- or 16-bit binary PGM (P5) of semantic label ids. Sixteen-bit
/// samples are accepted as long as every value fits a label byte.
pub fn load_pgm_labels(path: impl AsRef<Path>) -> Result<LabelImage, IoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut header = HeaderReader::new(&bytes, true);
    if header.token() != Some("P5") {
        return Err(IoError::malformed(path, "not a binary PGM, missing \"P5\" magic"));
    }
    let mut dims = [0usize; 3];
    for (value, name) in dims.iter_mut().zip(["width", "height", "maxval"]) {
        *value = header
            .token()
            .and_then(|t| t.parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| IoError::malformed(path, format!("bad {name} in header")))?;
    }
    let [width, height, maxval] = dims;
    if maxval > 65535 {
        return Err(IoError::malformed(path, format!("maxval {maxval} exceeds 65535")));
    }
    let wide = maxval > 255;
    let payload = header
        .payload()
        .ok_or_else(|| IoError::malformed(path, "missing payload separator"))?;
    let sample_bytes = if wide { 2 } else { 1 };
    let expected = width * height * sample_bytes;
    if payload.len() != expected {
        return Err(IoError::malformed(
            path,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let mut data = vec![0u8; width * height];
    for file_row in 0..height {
        let y = height - 1 - file_row;
        for x in 0..width {
            let i = (file_row * width + x) * sample_bytes;
            let value = if wide {
                u16::from_be_bytes([payload[i], payload[i + 1]]) as usize
            } else {
                payload[i] as usize
            };
            if value > 255 {
                return Err(IoError::malformed(
                    path,
                    format!("label id {value} at pixel ({x}, {file_row}) exceeds 255"),
                ));
            }
            data[y * width + x] = value as u8;
        }
    }
    LabelImage::new(width, height, data)
}

/// Writes label ids as an 8-bit binary PGM, top row first.
pub fn save_pgm_labels(path: impl AsRef<Path>, labels: &LabelImage) -> Result<(), IoError> {
    let path = path.as_ref();
    let (width, height) = labels.dims();
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(width * height);
    for file_row in 0..height {
        let y = height - 1 - file_row;
        bytes.extend_from_slice(&labels.values()[y * width..(y + 1) * width]);
    }
    write_bytes(path, &bytes)
}

/// Writes an RGB image as binary PPM (P6), top row first.
pub fn save_ppm(path: impl AsRef<Path>, image: &RgbImage) -> Result<(), IoError> {
    let path = path.as_ref();
    let (width, height) = (image.width(), image.height());
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(width * height * 3);
    for file_row in 0..height {
        let y = height - 1 - file_row;
        bytes.extend_from_slice(&image.values()[y * width * 3..(y + 1) * width * 3]);
    }
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_flips_rows_back() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelImage::new(3, 2, vec![0, 1, 2, 10, 11, 12]).unwrap();
        let path = dir.path().join("l.pgm");
        save_pgm_labels(&path, &labels).unwrap();
        let back = load_pgm_labels(&path).unwrap();
        assert_eq!(labels, back);

        // On disk the top row (y = 1) comes first.
        let bytes = std::fs::read(&path).unwrap();
        let header_len = "P5\n3 2\n255\n".len();
        assert_eq!(&bytes[header_len..header_len + 3], &[10, 11, 12]);
    }

    #[test]
    fn sixteen_bit_samples_load_when_they_fit_a_byte() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P5\n2 1\n1000\n".to_vec();
        bytes.extend_from_slice(&7u16.to_be_bytes());
        bytes.extend_from_slice(&255u16.to_be_bytes());
        let path = dir.path().join("w.pgm");
        std::fs::write(&path, &bytes).unwrap();
        let labels = load_pgm_labels(&path).unwrap();
        assert_eq!(labels.values(), &[7, 255]);

        let mut too_big = b"P5\n1 1\n1000\n".to_vec();
        too_big.extend_from_slice(&300u16.to_be_bytes());
        std::fs::write(&path, &too_big).unwrap();
        let err = load_pgm_labels(&path).unwrap_err().to_string();
        assert!(err.contains("exceeds 255"), "{err}");
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5 # label map\n# dims\n2 1\n255\n\x05\x06").unwrap();
        let labels = load_pgm_labels(&path).unwrap();
        assert_eq!(labels.values(), &[5, 6]);
    }

    #[test]
    fn ppm_writes_top_row_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::filled(1, 2, [0, 0, 0]);
        img.set(0, 1, [9, 8, 7]);
        let path = dir.path().join("v.ppm");
        save_ppm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..11], b"P6\n1 2\n255\n");
        assert_eq!(&bytes[11..14], &[9, 8, 7]);
        assert_eq!(&bytes[14..], &[0, 0, 0]);
    }

    #[test]
    fn bad_pgm_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        std::fs::write(&path, b"P2\n1 1\n255\n5").unwrap();
        assert!(load_pgm_labels(&path).is_err());
        std::fs::write(&path, b"P5\n2 1\n255\n\x01").unwrap();
        let err = load_pgm_labels(&path).unwrap_err().to_string();
        assert!(err.contains("expected"), "{err}");
    }
}
