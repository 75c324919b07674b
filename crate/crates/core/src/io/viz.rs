//! Figure-style renderings of stixel worlds: class colors or a disparity
//! ramp, with every stixel outlined in black.

use std::path::Path;

use super::pnm::save_ppm;
use super::{IoError, RgbImage};
use crate::model::{GeometricClass, StixelWorld};

/// What the fill color of each stixel encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizMode {
    /// Fixed per-class palette, indexed by semantic class modulo its length.
    Semantic,
    /// Blue-to-red ramp over disparity, normalized to the world's maximum.
    Depth,
}

/// Fill colors for semantic mode. Classes beyond the table wrap around.
const PALETTE: [[u8; 3]; 12] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [107, 142, 35],
    [153, 153, 153],
    [0, 0, 142],
    [220, 20, 60],
    [70, 130, 180],
    [220, 220, 0],
    [152, 251, 152],
    [0, 0, 70],
    [119, 11, 32],
];

/// Piecewise-linear ramp from dark blue through cyan and yellow to dark red.
const RAMP: [(f64, [u8; 3]); 6] = [
    (0.0, [0, 0, 143]),
    (0.125, [0, 0, 255]),
    (0.375, [0, 255, 255]),
    (0.625, [255, 255, 0]),
    (0.875, [255, 0, 0]),
    (1.0, [128, 0, 0]),
];

fn ramp_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    for pair in RAMP.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let s = (t - t0) / (t1 - t0);
            let mut c = [0u8; 3];
            for k in 0..3 {
                c[k] = (c0[k] as f64 + s * (c1[k] as f64 - c0[k] as f64)).round() as u8;
            }
            return c;
        }
    }
    RAMP[RAMP.len() - 1].1
}

/// Largest boundary-row disparity of any non-sky stixel, floored at 1 so a
/// world of skies still has a defined scale.
fn disparity_scale(world: &StixelWorld) -> f64 {
    let mut max = 1.0f64;
    for column in &world.columns {
        for stixel in &column.stixels {
            if stixel.geometric == GeometricClass::Sky {
                continue;
            }
            for v in [stixel.v_bottom, stixel.v_top] {
                max = max.max(stixel.plane.disparity_at(v as f64));
            }
        }
    }
    max
}

/// Draws the world at full input resolution.
///
/// Every stixel paints its footprint with the mode's fill color (depth mode
/// shades per downsampled row, so slanted planes show a vertical gradient)
/// and is then outlined with a 1-pixel black border. Pixels outside any
/// stixel, such as leftover strips the grid does not cover, stay black.
pub fn visualize(world: &StixelWorld, mode: VizMode) -> Result<RgbImage, IoError> {
    world.validate()?;
    let (width, height) = world.image_dims;
    let mut image = RgbImage::filled(width, height, [0, 0, 0]);
    let scale = disparity_scale(world);

    for column in &world.columns {
        let x0 = column.index * world.stixel_width;
        let x1 = x0 + world.stixel_width;
        for stixel in &column.stixels {
            let y0 = stixel.v_bottom * world.vstep;
            let y1 = (stixel.v_top + 1) * world.vstep;
            for v in stixel.v_bottom..=stixel.v_top {
                let color = match mode {
                    VizMode::Semantic => PALETTE[stixel.semantic_class % PALETTE.len()],
                    VizMode::Depth => {
                        let d = match stixel.geometric {
                            GeometricClass::Sky => 0.0,
                            _ => stixel.plane.disparity_at(v as f64),
                        };
                        ramp_color(d / scale)
                    }
                };
                for y in v * world.vstep..(v + 1) * world.vstep {
                    for x in x0..x1 {
                        image.set(x, y, color);
                    }
                }
            }
            for x in x0..x1 {
                image.set(x, y0, [0, 0, 0]);
                image.set(x, y1 - 1, [0, 0, 0]);
            }
            for y in y0..y1 {
                image.set(x0, y, [0, 0, 0]);
                image.set(x1 - 1, y, [0, 0, 0]);
            }
        }
    }
    Ok(image)
}

/// Renders the world and writes it as a binary PPM.
pub fn save_ppm_visualization(
    path: impl AsRef<Path>,
    world: &StixelWorld,
    mode: VizMode,
) -> Result<(), IoError> {
    let image = visualize(world, mode)?;
    save_ppm(path, &image)
}
