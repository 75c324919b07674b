//! File formats, input downsampling, and rendering of stixel worlds back to
//! dense per-pixel maps.
//!
//! Every in-memory image in this crate stores row 0 at the bottom. PFM files
//! already use that order; PGM, PPM and the semantic tensor format store the
//! top row first, so their readers and writers flip rows at the boundary.

mod downsample;
mod pfm;
mod pnm;
mod render;
mod semf;
mod viz;
mod world_json;

pub use downsample::downsample;
pub use pfm::{load_pfm, save_pfm};
pub use pnm::{load_pgm_labels, save_pgm_labels, save_ppm};
pub use render::{render, RenderedWorld};
pub use semf::{load_scores, save_scores, ScoreIngest};
pub use viz::{save_ppm_visualization, visualize, VizMode};
pub use world_json::{load_world, save_world, world_from_json, world_to_json};

use crate::energy::EnergyError;
use crate::model::ModelError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    World(#[from] ModelError),
    #[error(transparent)]
    Measurements(#[from] EnergyError),
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> IoError {
        IoError::File { path: path.to_path_buf(), source }
    }

    fn malformed(path: &Path, reason: impl Into<String>) -> IoError {
        IoError::Malformed { path: path.to_path_buf(), reason: reason.into() }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::file(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::file(path, e))
}

/// Single-channel 32-bit image, row-major with row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DenseImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, IoError> {
        if width == 0 || height == 0 {
            return Err(IoError::Shape(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(IoError::Shape(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(DenseImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        DenseImage { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Value at column `x`, row `y` counted from the bottom.
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }
}

/// Per-pixel semantic scores, `classes` values per pixel, row 0 at the
/// bottom. Scores are stored exactly as provided; see [`load_scores`] for
/// the normalization applied on ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f32>,
}

impl ScoreVolume {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        data: Vec<f32>,
    ) -> Result<Self, IoError> {
        if width == 0 || height == 0 || classes == 0 {
            return Err(IoError::Shape(format!(
                "empty score volume {width}x{height}x{classes}"
            )));
        }
        if data.len() != width * height * classes {
            return Err(IoError::Shape(format!(
                "{} scores for a {width}x{height}x{classes} volume",
                data.len()
            )));
        }
        Ok(ScoreVolume { width, height, classes, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn score(&self, x: usize, y: usize, class: usize) -> f32 {
        self.data[(y * self.width + x) * self.classes + class]
    }

    pub fn set_score(&mut self, x: usize, y: usize, class: usize, value: f32) {
        self.data[(y * self.width + x) * self.classes + class] = value;
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }
}

/// Label id reserved for pixels outside any stixel or excluded from
/// evaluation.
pub const IGNORE_LABEL: u8 = 255;

/// Per-pixel semantic class ids, row 0 at the bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, IoError> {
        if width == 0 || height == 0 {
            return Err(IoError::Shape(format!("empty label image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(IoError::Shape(format!(
                "{} labels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(LabelImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        LabelImage { width, height, data: vec![label; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }
}

/// 8-bit RGB image, row 0 at the bottom, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }
}

/// Pulls whitespace-separated ASCII tokens off a binary header. PNM-style
/// `#` comments are skipped when enabled. After the last header token the
/// payload begins following exactly one whitespace byte.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: bool,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8], comments: bool) -> Self {
        HeaderReader { bytes, pos: 0, comments }
    }

    fn skip_filler(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.comments && self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_filler();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    /// Consumes the single whitespace byte separating header and payload and
    /// returns the payload.
    fn payload(mut self) -> Option<&'a [u8]> {
        if self.bytes.get(self.pos)?.is_ascii_whitespace() {
            self.pos += 1;
            Some(&self.bytes[self.pos..])
        } else {
            None
        }
    }
}
