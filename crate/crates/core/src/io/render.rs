//! Re-projection of a stixel decomposition back to full-resolution images.

use super::{DenseImage, IoError, LabelImage, IGNORE_LABEL};
use crate::energy::INVALID_DISPARITY;
use crate::model::{GeometricClass, StixelWorld};

/// Full-resolution images reconstructed from a stixel world.
pub struct RenderedWorld {
    pub disparity: DenseImage,
    pub labels: LabelImage,
}

/// Expands every stixel back to pixels.
///
/// Each downsampled row of a stixel is evaluated once (sky renders as
/// disparity zero, other classes via their plane) and the value is
/// replicated across the `stixel_width` by `vstep` pixel block. Pixels in
/// leftover strips not covered by any grid cell keep the invalid disparity
/// and the ignore label.
pub fn render(world: &StixelWorld) -> Result<RenderedWorld, IoError> {
    world.validate()?;
    if world.taxonomy.class_count() > IGNORE_LABEL as usize {
        return Err(IoError::Shape(format!(
            "{} classes cannot be stored as 8-bit labels (255 is reserved)",
            world.taxonomy.class_count()
        )));
    }
    let (width, height) = world.image_dims;
    let mut disparity = DenseImage::filled(width, height, INVALID_DISPARITY as f32);
    let mut labels = LabelImage::filled(width, height, IGNORE_LABEL);

    for column in &world.columns {
        let x0 = column.index * world.stixel_width;
        for stixel in &column.stixels {
            let label = stixel.semantic_class as u8;
            for v in stixel.v_bottom..=stixel.v_top {
                let d = match stixel.geometric {
                    GeometricClass::Sky => 0.0,
                    _ => stixel.plane.disparity_at(v as f64) as f32,
                };
                let y0 = v * world.vstep;
                for y in y0..y0 + world.vstep {
                    for x in x0..x0 + world.stixel_width {
                        disparity.set(x, y, d);
                        labels.set(x, y, label);
                    }
                }
            }
        }
    }
    Ok(RenderedWorld { disparity, labels })
}
