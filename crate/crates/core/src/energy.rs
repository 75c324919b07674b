//! Per-pixel and per-segment energy terms: the robust disparity sensor
//! model, semantic label costs, plane parameter priors, and the cumulative
//! column sums that make segment evaluation cheap.

use crate::model::{GeometricClass, Model, ModelConfig, Plane};
use thiserror::Error;

/// Disparity value marking a pixel without a usable measurement.
pub const INVALID_DISPARITY: f64 = -1.0;

/// Upper bound on a per-pixel semantic cost in nats. Scores are floored at
/// `exp(-12)` (about 6e-6) so a single mislabeled pixel cannot dominate a
/// column energy.
pub const SEMANTIC_COST_CAP: f64 = 12.0;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("measurements: {0}")]
    BadMeasurements(String),
    #[error("semantic class {class} out of range, column has {count} classes")]
    ClassOutOfRange { class: usize, count: usize },
    #[error("rows {v_bottom}..={v_top} out of range, column has {rows} rows")]
    RowsOutOfRange { v_bottom: usize, v_top: usize, rows: usize },
}

/// Converts a semantic score (a probability) into a label cost in nats,
/// capped at [`SEMANTIC_COST_CAP`].
pub fn semantic_cost_from_score(score: f64) -> f64 {
    if score > 0.0 {
        (-score.ln()).clamp(0.0, SEMANTIC_COST_CAP)
    } else {
        SEMANTIC_COST_CAP
    }
}

/// Measurements of one downsampled image column. Row 0 is the bottom of the
/// image and rows grow upward.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeasurements {
    rows: usize,
    class_count: usize,
    /// Disparity per row, [`INVALID_DISPARITY`] where no measurement exists.
    disparity: Vec<f64>,
    /// Measurement confidence per row in (0, 1].
    confidence: Vec<f64>,
    /// Semantic label costs, row-major: `semantic_cost[v * class_count + k]`.
    semantic_cost: Vec<f64>,
}

impl ColumnMeasurements {
    pub fn new(
        disparity: Vec<f64>,
        confidence: Vec<f64>,
        semantic_cost: Vec<f64>,
        class_count: usize,
    ) -> Result<Self, EnergyError> {
        let rows = disparity.len();
        let fail = |msg: String| Err(EnergyError::BadMeasurements(msg));
        if rows == 0 {
            return fail("column has no rows".into());
        }
        if class_count == 0 {
            return fail("column has no semantic classes".into());
        }
        if confidence.len() != rows {
            return fail(format!("{} confidences for {rows} rows", confidence.len()));
        }
        if semantic_cost.len() != rows * class_count {
            return fail(format!(
                "{} semantic costs for {rows} rows x {class_count} classes",
                semantic_cost.len()
            ));
        }
        for (v, &d) in disparity.iter().enumerate() {
            if !d.is_finite() || (d < 0.0 && d != INVALID_DISPARITY) {
                return fail(format!("disparity {d} at row {v}"));
            }
        }
        for (v, &c) in confidence.iter().enumerate() {
            if !(c.is_finite() && c > 0.0 && c <= 1.0) {
                return fail(format!("confidence {c} at row {v} outside (0, 1]"));
            }
        }
        for (i, &s) in semantic_cost.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return fail(format!("semantic cost {s} at index {i}"));
            }
        }
        Ok(ColumnMeasurements { rows, class_count, disparity, confidence, semantic_cost })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn disparity(&self, v: usize) -> f64 {
        self.disparity[v]
    }

    pub fn confidence(&self, v: usize) -> f64 {
        self.confidence[v]
    }

    pub fn is_valid(&self, v: usize) -> bool {
        self.disparity[v] >= 0.0
    }

    pub fn semantic_cost(&self, v: usize, class: usize) -> f64 {
        self.semantic_cost[v * self.class_count + class]
    }

    /// Largest valid disparity, or None if every row is invalid.
    pub fn max_valid_disparity(&self) -> Option<f64> {
        self.disparity
            .iter()
            .copied()
            .filter(|&d| d >= 0.0)
            .fold(None, |acc, d| Some(acc.map_or(d, |m: f64| m.max(d))))
    }

    /// Semantic class with the lowest cost at row `v` (lowest index wins ties).
    pub fn argmin_semantic(&self, v: usize) -> usize {
        let row = &self.semantic_cost[v * self.class_count..(v + 1) * self.class_count];
        let mut best = 0;
        for (k, &cost) in row.iter().enumerate().skip(1) {
            if cost < row[best] {
                best = k;
            }
        }
        best
    }
}

/// A full image reduced to stixel columns: one [`ColumnMeasurements`] per
/// `stixel_width` pixels of the original width, each with one row per
/// `vstep` pixels of the original height. Leftover pixels that do not fill
/// a whole column or row block are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMeasurements {
    columns: Vec<ColumnMeasurements>,
    stixel_width: usize,
    vstep: usize,
    /// Width and height of the original image in pixels.
    image_dims: (usize, usize),
}

impl ImageMeasurements {
    pub fn new(
        columns: Vec<ColumnMeasurements>,
        stixel_width: usize,
        vstep: usize,
        image_dims: (usize, usize),
    ) -> Result<Self, EnergyError> {
        let fail = |msg: String| Err(EnergyError::BadMeasurements(msg));
        if stixel_width == 0 || vstep == 0 {
            return fail("stixel width and vstep must be positive".into());
        }
        let (width, height) = image_dims;
        if columns.len() != width / stixel_width {
            return fail(format!(
                "{} columns for a {width} px image at stixel width {stixel_width}",
                columns.len()
            ));
        }
        if columns.is_empty() {
            return fail("image narrower than one stixel".into());
        }
        let rows = height / vstep;
        let classes = columns[0].class_count();
        for (x, col) in columns.iter().enumerate() {
            if col.rows() != rows {
                return fail(format!(
                    "column {x} has {} rows, expected {rows}",
                    col.rows()
                ));
            }
            if col.class_count() != classes {
                return fail(format!(
                    "column {x} has {} classes, expected {classes}",
                    col.class_count()
                ));
            }
        }
        Ok(ImageMeasurements { columns, stixel_width, vstep, image_dims })
    }

    pub fn columns(&self) -> &[ColumnMeasurements] {
        &self.columns
    }

    pub fn column(&self, x: usize) -> &ColumnMeasurements {
        &self.columns[x]
    }

    pub fn stixel_width(&self) -> usize {
        self.stixel_width
    }

    pub fn vstep(&self) -> usize {
        self.vstep
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    /// Rows per column after vertical downsampling.
    pub fn rows(&self) -> usize {
        self.columns[0].rows()
    }

    pub fn class_count(&self) -> usize {
        self.columns[0].class_count()
    }
}

#[derive(Debug, Clone, Default)]
struct PrefixMoments {
    w: Vec<f64>,
    wv: Vec<f64>,
    wv2: Vec<f64>,
    wd: Vec<f64>,
    wvd: Vec<f64>,
    wd2: Vec<f64>,
}

/// Weighted moment sums of one segment, weights `w_v = (c_v / sigma_g)^2`
/// over valid rows only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMoments {
    pub w: f64,
    pub wv: f64,
    pub wv2: f64,
    pub wd: f64,
    pub wvd: f64,
    pub wd2: f64,
    pub valid: usize,
}

/// Cumulative sums over a column enabling O(1) segment moment and semantic
/// cost queries. Weighted moments are kept per geometric class because the
/// weights include the per-class noise scale.
#[derive(Debug, Clone)]
pub struct ColumnPrefix {
    rows: usize,
    class_count: usize,
    moments: [PrefixMoments; 3],
    valid: Vec<u32>,
    semantic: Vec<f64>,
}

impl ColumnPrefix {
    pub fn build(col: &ColumnMeasurements, config: &ModelConfig) -> Self {
        let rows = col.rows;
        let class_count = col.class_count;
        let mut moments: [PrefixMoments; 3] = Default::default();
        for g in GeometricClass::ALL {
            let sigma = config.sigma_noise[g];
            let m = &mut moments[g.index()];
            for field in [&mut m.w, &mut m.wv, &mut m.wv2, &mut m.wd, &mut m.wvd, &mut m.wd2] {
                field.reserve(rows + 1);
                field.push(0.0);
            }
            for v in 0..rows {
                let (mut w, mut wv, mut wv2, mut wd, mut wvd, mut wd2) =
                    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                if col.is_valid(v) {
                    let ratio = col.confidence[v] / sigma;
                    w = ratio * ratio;
                    let vf = v as f64;
                    let d = col.disparity[v];
                    wv = w * vf;
                    wv2 = wv * vf;
                    wd = w * d;
                    wvd = wd * vf;
                    wd2 = wd * d;
                }
                m.w.push(m.w[v] + w);
                m.wv.push(m.wv[v] + wv);
                m.wv2.push(m.wv2[v] + wv2);
                m.wd.push(m.wd[v] + wd);
                m.wvd.push(m.wvd[v] + wvd);
                m.wd2.push(m.wd2[v] + wd2);
            }
        }
        let mut valid = Vec::with_capacity(rows + 1);
        valid.push(0u32);
        for v in 0..rows {
            valid.push(valid[v] + u32::from(col.is_valid(v)));
        }
        let mut semantic = vec![0.0; (rows + 1) * class_count];
        for v in 0..rows {
            for k in 0..class_count {
                semantic[(v + 1) * class_count + k] =
                    semantic[v * class_count + k] + col.semantic_cost(v, k);
            }
        }
        ColumnPrefix { rows, class_count, moments, valid, semantic }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Weighted moments of rows `v_bottom..=v_top` for geometric class `g`.
    pub fn moments(&self, g: GeometricClass, v_bottom: usize, v_top: usize) -> SegmentMoments {
        let m = &self.moments[g.index()];
        let (lo, hi) = (v_bottom, v_top + 1);
        SegmentMoments {
            w: m.w[hi] - m.w[lo],
            wv: m.wv[hi] - m.wv[lo],
            wv2: m.wv2[hi] - m.wv2[lo],
            wd: m.wd[hi] - m.wd[lo],
            wvd: m.wvd[hi] - m.wvd[lo],
            wd2: m.wd2[hi] - m.wd2[lo],
            valid: (self.valid[hi] - self.valid[lo]) as usize,
        }
    }

    pub fn valid_count(&self, v_bottom: usize, v_top: usize) -> usize {
        (self.valid[v_top + 1] - self.valid[v_bottom]) as usize
    }

    /// Raw (unweighted) semantic cost of class `k` summed over the segment.
    pub fn semantic_sum(&self, k: usize, v_bottom: usize, v_top: usize) -> f64 {
        self.semantic[(v_top + 1) * self.class_count + k]
            - self.semantic[v_bottom * self.class_count + k]
    }
}

/// `erf(b) - erf(a)` for `a <= b`, computed through `erfc` when both
/// arguments share a sign so the difference keeps its precision in the tails.
fn erf_span(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    }
}

/// Integral of `exp(-((x - center) / width)^2)` over `[lo, hi]`.
fn gaussian_kernel_mass(lo: f64, hi: f64, center: f64, width: f64) -> f64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    width * (sqrt_pi / 2.0) * erf_span((lo - center) / width, (hi - center) / width)
}

/// Negative log-likelihood of observing disparity `d` at row `v` under the
/// plane hypothesis, with measurement confidence `c` in (0, 1].
///
/// The sensor model mixes a uniform outlier floor over `[0, d_max]` with a
/// Gaussian kernel `exp(-((c (d - f)) / sigma)^2)` centered on the plane's
/// expected disparity `f`, the Gaussian normalized over the same truncated
/// range so the density integrates to one for any hypothesis. Rows without a
/// measurement cost `invalid_cost` regardless of the hypothesis.
pub fn depth_pixel_energy(
    g: GeometricClass,
    plane: &Plane,
    v: usize,
    d: f64,
    c: f64,
    config: &ModelConfig,
) -> f64 {
    if d < 0.0 {
        return config.invalid_cost;
    }
    let f = plane.disparity_at(v as f64);
    let width = config.sigma_noise[g] / c;
    let mass = gaussian_kernel_mass(0.0, config.d_max, f, width);
    let mut density = config.p_out / config.d_max;
    if mass > 0.0 {
        let u = (d - f) / width;
        density += (1.0 - config.p_out) * (-u * u).exp() / mass;
    }
    -density.ln()
}

/// Weighted semantic cost of labeling row `v` with `class`.
pub fn semantic_pixel_energy(
    col: &ColumnMeasurements,
    class: usize,
    v: usize,
    config: &ModelConfig,
) -> Result<f64, EnergyError> {
    if class >= col.class_count {
        return Err(EnergyError::ClassOutOfRange { class, count: col.class_count });
    }
    if v >= col.rows {
        return Err(EnergyError::RowsOutOfRange { v_bottom: v, v_top: v, rows: col.rows });
    }
    Ok(config.w_l * col.semantic_cost(v, class))
}

/// Prior energy of a plane under the Gaussian parameter prior of its class:
/// the squared standardized deviations plus the log-normalizer of the free
/// dimensions. Hard-clamped dimensions contribute neither term; callers are
/// expected to pass planes whose clamped parameters equal their means.
pub fn plane_prior_energy(g: GeometricClass, plane: &Plane, config: &ModelConfig) -> f64 {
    let prior = config.plane_priors[g];
    let sqrt_tau = (2.0 * std::f64::consts::PI).sqrt();
    let mut energy = 0.0;
    if !prior.clamp_a() {
        let q = (plane.a - prior.mu_a) / prior.sigma_a;
        energy += q * q + (sqrt_tau * prior.sigma_a).ln();
    }
    if !prior.clamp_b() {
        let q = (plane.b - prior.mu_b) / prior.sigma_b;
        energy += q * q + (sqrt_tau * prior.sigma_b).ln();
    }
    energy
}

/// Data energy of labeling rows `v_bottom..=v_top` with geometric class `g`
/// and the given plane: the exact per-row depth sum plus the best semantic
/// cost among the classes mapped to `g`. Returns the energy and the chosen
/// semantic class (lowest index wins ties).
pub fn segment_data_energy(
    col: &ColumnMeasurements,
    prefix: &ColumnPrefix,
    v_bottom: usize,
    v_top: usize,
    g: GeometricClass,
    plane: &Plane,
    model: &Model,
) -> Result<(f64, usize), EnergyError> {
    if v_bottom > v_top || v_top >= col.rows {
        return Err(EnergyError::RowsOutOfRange { v_bottom, v_top, rows: col.rows });
    }
    let config = model.config();
    let mut depth = 0.0;
    for v in v_bottom..=v_top {
        depth += depth_pixel_energy(g, plane, v, col.disparity[v], col.confidence[v], config);
    }
    let mut best_class = usize::MAX;
    let mut best_semantic = f64::INFINITY;
    for &k in model.taxonomy().semantic_classes_of(g) {
        let cost = config.w_l * prefix.semantic_sum(k, v_bottom, v_top);
        if cost < best_semantic {
            best_semantic = cost;
            best_class = k;
        }
    }
    Ok((depth + best_semantic, best_class))
}
