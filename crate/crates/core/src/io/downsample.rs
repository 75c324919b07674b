//! Reduction of full-resolution inputs to the stixel grid: each
//! `stixel_width` by `vstep` block of pixels becomes one measurement cell.

use super::{DenseImage, IoError, ScoreVolume};
use crate::energy::{
    semantic_cost_from_score, ColumnMeasurements, ImageMeasurements, INVALID_DISPARITY,
};

/// Aggregates full-resolution inputs into per-column measurements.
///
/// Disparity becomes the median over the block's valid pixels (mean of the
/// two middles for even counts), or invalid when the block has none. A pixel
/// is valid when its disparity is a finite non-negative value and, if a
/// confidence image is given, its confidence is positive. Cell confidence is
/// the mean over those valid pixels, defaulting to 1 when no confidence
/// image is supplied. Semantic scores are averaged per class over the whole
/// block and converted to label costs. Leftover pixels beyond the last full
/// block are dropped.
pub fn downsample(
    disparity: &DenseImage,
    confidence: Option<&DenseImage>,
    scores: &ScoreVolume,
    stixel_width: usize,
    vstep: usize,
) -> Result<ImageMeasurements, IoError> {
    let (width, height) = disparity.dims();
    if scores.dims() != (width, height) {
        return Err(IoError::Shape(format!(
            "scores are {}x{} but disparity is {width}x{height}",
            scores.width(),
            scores.height()
        )));
    }
    if let Some(c) = confidence {
        if c.dims() != (width, height) {
            return Err(IoError::Shape(format!(
                "confidence is {}x{} but disparity is {width}x{height}",
                c.width(),
                c.height()
            )));
        }
    }
    if stixel_width == 0 || vstep == 0 {
        return Err(IoError::Shape("stixel width and vstep must be at least 1".into()));
    }
    if stixel_width > width || vstep > height {
        return Err(IoError::Shape(format!(
            "block size {stixel_width}x{vstep} exceeds the {width}x{height} image"
        )));
    }

    let grid_cols = width / stixel_width;
    let grid_rows = height / vstep;
    let classes = scores.classes();
    let mut columns = Vec::with_capacity(grid_cols);
    let mut cell_disparities: Vec<f64> = Vec::with_capacity(stixel_width * vstep);

    for cx in 0..grid_cols {
        let mut disparity_col = Vec::with_capacity(grid_rows);
        let mut confidence_col = Vec::with_capacity(grid_rows);
        let mut cost_col = Vec::with_capacity(grid_rows * classes);
        for cy in 0..grid_rows {
            cell_disparities.clear();
            let mut confidence_sum = 0.0f64;
            for y in cy * vstep..(cy + 1) * vstep {
                for x in cx * stixel_width..(cx + 1) * stixel_width {
                    let d = disparity.get(x, y);
                    let c = match confidence {
                        Some(img) => {
                            let c = img.get(x, y) as f64;
                            if c > 1.0 || !c.is_finite() {
                                return Err(IoError::Shape(format!(
                                    "confidence {c} at pixel ({x}, {y}) outside (0, 1]"
                                )));
                            }
                            c
                        }
                        None => 1.0,
                    };
                    if d.is_finite() && d >= 0.0 && c > 0.0 {
                        cell_disparities.push(d as f64);
                        confidence_sum += c;
                    }
                }
            }
            if cell_disparities.is_empty() {
                disparity_col.push(INVALID_DISPARITY);
                confidence_col.push(1.0);
            } else {
                cell_disparities.sort_unstable_by(f64::total_cmp);
                let n = cell_disparities.len();
                let median = if n % 2 == 1 {
                    cell_disparities[n / 2]
                } else {
                    0.5 * (cell_disparities[n / 2 - 1] + cell_disparities[n / 2])
                };
                disparity_col.push(median);
                confidence_col.push(confidence_sum / n as f64);
            }
            let block_pixels = (stixel_width * vstep) as f64;
            for k in 0..classes {
                let mut sum = 0.0f64;
                for y in cy * vstep..(cy + 1) * vstep {
                    for x in cx * stixel_width..(cx + 1) * stixel_width {
                        sum += scores.score(x, y, k) as f64;
                    }
                }
                cost_col.push(semantic_cost_from_score(sum / block_pixels));
            }
        }
        columns.push(ColumnMeasurements::new(
            disparity_col,
            confidence_col,
            cost_col,
            classes,
        )?);
    }
    Ok(ImageMeasurements::new(columns, stixel_width, vstep, (width, height))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_scores(width: usize, height: usize, classes: usize) -> ScoreVolume {
        let s = 1.0 / classes as f32;
        ScoreVolume::new(width, height, classes, vec![s; width * height * classes]).unwrap()
    }

    #[test]
    fn unit_blocks_are_the_identity() {
        let disparity = DenseImage::new(2, 2, vec![1.0, 2.0, 3.0, -1.0]).unwrap();
        let mut scores = uniform_scores(2, 2, 2);
        scores.set_score(0, 1, 0, 0.8);
        scores.set_score(0, 1, 1, 0.2);
        let m = downsample(&disparity, None, &scores, 1, 1).unwrap();
        assert_eq!(m.columns().len(), 2);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.column(0).disparity(0), 1.0);
        assert_eq!(m.column(1).disparity(0), 2.0);
        assert_eq!(m.column(0).disparity(1), 3.0);
        assert!(!m.column(1).is_valid(1));
        // Costs are -log of the stored scores.
        let c = m.column(0).semantic_cost(1, 0);
        assert!((c - (-(0.8f64).ln())).abs() < 1e-6, "{c}");
        assert_eq!(m.column(0).confidence(0), 1.0);
    }

    #[test]
    fn median_ignores_invalid_members() {
        let disparity = DenseImage::new(2, 2, vec![10.0, 10.0, 10.0, -1.0]).unwrap();
        let scores = uniform_scores(2, 2, 2);
        let m = downsample(&disparity, None, &scores, 2, 2).unwrap();
        assert_eq!(m.column(0).disparity(0), 10.0);
    }

    #[test]
    fn even_counts_average_the_two_middles() {
        let disparity = DenseImage::new(2, 2, vec![1.0, 2.0, 8.0, 100.0]).unwrap();
        let scores = uniform_scores(2, 2, 2);
        let m = downsample(&disparity, None, &scores, 2, 2).unwrap();
        assert_eq!(m.column(0).disparity(0), 5.0);
    }

    #[test]
    fn all_invalid_blocks_stay_invalid() {
        let disparity = DenseImage::new(2, 2, vec![-1.0; 4]).unwrap();
        let scores = uniform_scores(2, 2, 3);
        let m = downsample(&disparity, None, &scores, 2, 2).unwrap();
        assert!(!m.column(0).is_valid(0));
        assert_eq!(m.column(0).confidence(0), 1.0);
    }

    #[test]
    fn confidence_averages_over_valid_pixels_and_gates_validity() {
        let disparity = DenseImage::new(2, 1, vec![4.0, 6.0]).unwrap();
        let confidence = DenseImage::new(2, 1, vec![0.5, 0.0]).unwrap();
        let scores = uniform_scores(2, 1, 2);
        let m = downsample(&disparity, Some(&confidence), &scores, 2, 1).unwrap();
        // The zero-confidence pixel drops out entirely: the median is taken
        // over the remaining pixel and the confidence over the same set.
        assert_eq!(m.column(0).disparity(0), 4.0);
        assert_eq!(m.column(0).confidence(0), 0.5);
    }

    #[test]
    fn leftover_strips_are_dropped() {
        let disparity = DenseImage::new(5, 5, vec![7.0; 25]).unwrap();
        let scores = uniform_scores(5, 5, 2);
        let m = downsample(&disparity, None, &scores, 2, 2).unwrap();
        assert_eq!(m.columns().len(), 2);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.image_dims(), (5, 5));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let disparity = DenseImage::new(4, 4, vec![1.0; 16]).unwrap();
        let scores = uniform_scores(4, 3, 2);
        assert!(downsample(&disparity, None, &scores, 1, 1).is_err());
        let scores = uniform_scores(4, 4, 2);
        assert!(downsample(&disparity, None, &scores, 5, 1).is_err());
        assert!(downsample(&disparity, None, &scores, 1, 0).is_err());
        let bad_conf = DenseImage::new(4, 4, vec![2.0; 16]).unwrap();
        assert!(downsample(&disparity, Some(&bad_conf), &scores, 1, 1).is_err());
    }
}
