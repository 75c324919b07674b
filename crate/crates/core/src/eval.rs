//! Synthetic scenes with exact ground truth, plus the metrics used to score
//! reconstructions against them: disparity outlier rate, mean IoU over
//! semantic classes, and work counters from inference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::INVALID_DISPARITY;
use crate::infer::InferStats;
use crate::io::{DenseImage, LabelImage, ScoreVolume, IGNORE_LABEL};
use crate::model::StixelWorld;

/// Absolute disparity error above which a pixel can count as an outlier.
pub const OUTLIER_ABS_PX: f64 = 3.0;
/// Relative disparity error above which a pixel can count as an outlier.
pub const OUTLIER_REL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scene spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Ground elevation expressed directly in disparity space: a piecewise-linear
/// function of the row index built from `(row, disparity)` knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundProfile {
    /// Knots with strictly increasing rows. A single knot means a constant
    /// profile; outside the knot range the profile clamps to the end values.
    pub knots: Vec<(f64, f64)>,
}

impl GroundProfile {
    /// Constant ground disparity.
    pub fn flat(disparity: f64) -> Self {
        GroundProfile { knots: vec![(0.0, disparity)] }
    }

    /// Linear ramp between two rows.
    pub fn ramp(v0: f64, d0: f64, v1: f64, d1: f64) -> Self {
        GroundProfile { knots: vec![(v0, d0), (v1, d1)] }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.knots.is_empty() {
            return Err(EvalError::Spec("ground profile needs at least one knot".into()));
        }
        for pair in self.knots.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(EvalError::Spec(format!(
                    "ground profile rows must strictly increase, got {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if self.knots.iter().any(|&(v, d)| !v.is_finite() || !d.is_finite()) {
            return Err(EvalError::Spec("ground profile knots must be finite".into()));
        }
        Ok(())
    }

    /// Disparity at row `v`, interpolating between knots and clamping
    /// outside their range.
    pub fn disparity_at(&self, v: f64) -> f64 {
        let knots = &self.knots;
        if v <= knots[0].0 {
            return knots[0].1;
        }
        for pair in knots.windows(2) {
            let (v0, d0) = pair[0];
            let (v1, d1) = pair[1];
            if v <= v1 {
                return d0 + (v - v0) / (v1 - v0) * (d1 - d0);
            }
        }
        knots[knots.len() - 1].1
    }
}

/// A fronto-parallel box standing in the scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Column span `[x0, x1)` in full-resolution pixels.
    pub x0: usize,
    pub x1: usize,
    /// Bottom row of the box.
    pub v_base: usize,
    /// Rows covered upward from `v_base`.
    pub height: usize,
    /// Constant disparity of the box face.
    pub disparity: f64,
    /// Semantic class id of the box.
    #[serde(default = "default_object_class")]
    pub class: u8,
}

fn default_object_class() -> u8 {
    1
}

fn default_classes() -> usize {
    3
}

fn default_sky_class() -> u8 {
    2
}

fn default_label_blend() -> f64 {
    0.2
}

fn default_d_max() -> f64 {
    128.0
}

/// Full description of a synthetic scene. Everything the generator does is a
/// deterministic function of this value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Full-resolution image size as (width, height).
    pub dims: (usize, usize),
    /// Number of semantic classes in the emitted score volume.
    #[serde(default = "default_classes")]
    pub classes: usize,
    pub ground: GroundProfile,
    /// Semantic class id of ground pixels.
    #[serde(default)]
    pub ground_class: u8,
    /// Semantic class id of sky pixels.
    #[serde(default = "default_sky_class")]
    pub sky_class: u8,
    /// First row (from the bottom) that is sky instead of ground.
    pub sky_from: usize,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation of the Gaussian measurement noise, in pixels.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Fraction of pixels replaced by a uniform draw over `[0, d_max)`.
    #[serde(default)]
    pub outlier_rate: f64,
    /// Fraction of pixels reported as invalid.
    #[serde(default)]
    pub invalid_rate: f64,
    /// Semantic scores are `(1 - blend) * one_hot + blend / classes`.
    #[serde(default = "default_label_blend")]
    pub label_blend: f64,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let (width, height) = self.dims;
        let fail = |reason: String| Err(EvalError::Spec(reason));
        if width == 0 || height == 0 {
            return fail(format!("image dims must be positive, got {width}x{height}"));
        }
        if self.classes == 0 || self.classes > IGNORE_LABEL as usize {
            return fail(format!(
                "class count must lie in [1, {}], got {}",
                IGNORE_LABEL,
                self.classes
            ));
        }
        for (what, id) in [("ground", self.ground_class), ("sky", self.sky_class)] {
            if id as usize >= self.classes {
                return fail(format!(
                    "{what} class {id} outside the {}-class range",
                    self.classes
                ));
            }
        }
        if self.sky_from > height {
            return fail(format!(
                "sky_from {} above the {height}-row image",
                self.sky_from
            ));
        }
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return fail(format!("d_max must be positive, got {}", self.d_max));
        }
        self.ground.validate()?;
        for v in 0..self.sky_from {
            let d = self.ground.disparity_at(v as f64);
            if !(0.0..=self.d_max).contains(&d) {
                return fail(format!(
                    "ground disparity {d} at row {v} outside [0, {}]",
                    self.d_max
                ));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.x0 >= o.x1 || o.x1 > width {
                return fail(format!(
                    "object {i}: column span [{}, {}) outside the {width}-wide image",
                    o.x0, o.x1
                ));
            }
            if o.height == 0 || o.v_base + o.height > height {
                return fail(format!(
                    "object {i}: rows [{}, {}) outside the {height}-row image",
                    o.v_base,
                    o.v_base + o.height
                ));
            }
            if !(o.disparity > 0.0 && o.disparity <= self.d_max) {
                return fail(format!(
                    "object {i}: disparity {} outside (0, {}]",
                    o.disparity, self.d_max
                ));
            }
            if o.class as usize >= self.classes {
                return fail(format!(
                    "object {i}: class {} outside the {}-class range",
                    o.class, self.classes
                ));
            }
        }
        for (what, rate) in [
            ("noise_sigma", self.noise_sigma),
            ("outlier_rate", self.outlier_rate),
            ("invalid_rate", self.invalid_rate),
        ] {
            if !(rate.is_finite() && rate >= 0.0) {
                return fail(format!("{what} must be finite and non-negative, got {rate}"));
            }
        }
        if self.outlier_rate >= 1.0
            || self.invalid_rate >= 1.0
            || self.outlier_rate + self.invalid_rate >= 1.0
        {
            return fail(format!(
                "outlier_rate {} + invalid_rate {} must sum below 1",
                self.outlier_rate, self.invalid_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.label_blend) {
            return fail(format!("label_blend must lie in [0, 1], got {}", self.label_blend));
        }
        Ok(())
    }
}

/// Region ids in the ground-truth pass: sky, ground, then one id per object.
const REGION_SKY: u32 = 0;
const REGION_GROUND: u32 = 1;

/// Generator output: noisy measurements plus exact ground truth.
pub struct SyntheticScene {
    /// Measured disparity with noise, outliers and invalid pixels applied.
    pub disparity: DenseImage,
    /// Semantic scores blending the true one-hot labels with uniform mass.
    pub scores: ScoreVolume,
    pub gt_disparity: DenseImage,
    pub gt_labels: LabelImage,
    region_ids: Vec<u32>,
}

impl SyntheticScene {
    /// Rows `v >= 1` where column `x` changes from one scene region to
    /// another: the exact segment boundaries an ideal tiling would use.
    pub fn boundary_rows(&self, x: usize) -> Vec<usize> {
        let (width, height) = self.gt_disparity.dims();
        assert!(x < width);
        (1..height)
            .filter(|&v| self.region_ids[v * width + x] != self.region_ids[(v - 1) * width + x])
            .collect()
    }
}

/// Renders the spec's ground truth and corrupts a measurement copy with the
/// spec's noise, outlier and invalidity processes. Deterministic in `seed`.
pub fn synthesize(spec: &SceneSpec) -> Result<SyntheticScene, EvalError> {
    spec.validate()?;
    let (width, height) = spec.dims;

    let mut gt_disparity = DenseImage::filled(width, height, 0.0);
    let mut gt_labels = LabelImage::filled(width, height, spec.sky_class);
    let mut region_ids = vec![REGION_SKY; width * height];
    for v in 0..spec.sky_from {
        let d = spec.ground.disparity_at(v as f64) as f32;
        for x in 0..width {
            gt_disparity.set(x, v, d);
            gt_labels.set(x, v, spec.ground_class);
            region_ids[v * width + x] = REGION_GROUND;
        }
    }
    for (i, o) in spec.objects.iter().enumerate() {
        let d = o.disparity as f32;
        for v in o.v_base..o.v_base + o.height {
            for x in o.x0..o.x1 {
                if d > gt_disparity.get(x, v) {
                    gt_disparity.set(x, v, d);
                    gt_labels.set(x, v, o.class);
                    region_ids[v * width + x] = 2 + i as u32;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| EvalError::Spec(format!("noise_sigma: {e}")))?;
    let mut disparity = DenseImage::filled(width, height, 0.0);
    for v in 0..height {
        for x in 0..width {
            let gt = gt_disparity.get(x, v) as f64;
            let u: f64 = rng.gen();
            let measured = if u < spec.invalid_rate {
                INVALID_DISPARITY
            } else if u < spec.invalid_rate + spec.outlier_rate {
                rng.gen_range(0.0..spec.d_max)
            } else if spec.noise_sigma > 0.0 {
                (gt + noise.sample(&mut rng)).clamp(0.0, spec.d_max)
            } else {
                gt
            };
            disparity.set(x, v, measured as f32);
        }
    }

    let uniform = (spec.label_blend / spec.classes as f64) as f32;
    let hot = (1.0 - spec.label_blend) as f32 + uniform;
    let mut scores =
        ScoreVolume::new(width, height, spec.classes, vec![uniform; width * height * spec.classes])
            .map_err(|e| EvalError::Spec(e.to_string()))?;
    for v in 0..height {
        for x in 0..width {
            scores.set_score(x, v, gt_labels.get(x, v) as usize, hot);
        }
    }

    Ok(SyntheticScene { disparity, scores, gt_disparity, gt_labels, region_ids })
}

/// Which error thresholds must be exceeded for a pixel to be an outlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierRule {
    /// Both the 3 px absolute and the 5% relative threshold (the stricter
    /// benchmark convention, the default).
    #[default]
    And,
    /// Either threshold alone suffices.
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutlierStats {
    /// Pixels with valid ground truth.
    pub evaluated: usize,
    pub outliers: usize,
    pub rate_percent: f64,
}

/// Fraction of pixels whose estimated disparity deviates from ground truth
/// by more than 3 px and/or 5%, per `rule`. Pixels without valid ground
/// truth are skipped; invalid estimates against valid ground truth count as
/// outliers through their large error.
pub fn disparity_outlier_rate(
    est: &DenseImage,
    gt: &DenseImage,
    rule: OutlierRule,
) -> Result<OutlierStats, EvalError> {
    if est.dims() != gt.dims() {
        return Err(EvalError::Shape(format!(
            "estimate is {:?} but ground truth is {:?}",
            est.dims(),
            gt.dims()
        )));
    }
    let mut evaluated = 0usize;
    let mut outliers = 0usize;
    for (&e, &g) in est.values().iter().zip(gt.values()) {
        if !(g.is_finite() && g >= 0.0) {
            continue;
        }
        evaluated += 1;
        let err = (e as f64 - g as f64).abs();
        let over_abs = err > OUTLIER_ABS_PX;
        let over_rel = err > OUTLIER_REL * g as f64;
        let is_outlier = match rule {
            OutlierRule::And => over_abs && over_rel,
            OutlierRule::Or => over_abs || over_rel,
        };
        if is_outlier {
            outliers += 1;
        }
    }
    let rate_percent = if evaluated == 0 {
        0.0
    } else {
        100.0 * outliers as f64 / evaluated as f64
    };
    Ok(OutlierStats { evaluated, outliers, rate_percent })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IouStats {
    /// Intersection over union per class, `None` for classes absent from
    /// the ground truth.
    pub per_class: Vec<Option<f64>>,
    /// Mean IoU over the classes present in ground truth, in percent.
    pub mean_percent: f64,
    pub evaluated_classes: usize,
}

impl IouStats {
    /// Aligned per-class table with names taken from `names`.
    pub fn text_table(&self, names: &[impl AsRef<str>]) -> String {
        let width = names
            .iter()
            .map(|n| n.as_ref().len())
            .chain(std::iter::once("class".len()))
            .max()
            .unwrap_or(5);
        let mut out = format!("{:width$}  IoU\n", "class");
        for (k, iou) in self.per_class.iter().enumerate() {
            let name = names.get(k).map(|n| n.as_ref()).unwrap_or("?");
            match iou {
                Some(v) => out.push_str(&format!("{name:width$}  {:6.2}%\n", 100.0 * v)),
                None => out.push_str(&format!("{name:width$}  absent\n")),
            }
        }
        out.push_str(&format!("{:width$}  {:6.2}%\n", "mean", self.mean_percent));
        out
    }
}

/// Mean intersection-over-union between predicted and ground-truth label
/// images, averaged over the classes present in ground truth. Pixels whose
/// ground truth carries the ignore label are skipped; ignore-labeled
/// predictions at evaluated pixels count as misses.
pub fn mean_iou(
    pred: &LabelImage,
    gt: &LabelImage,
    class_count: usize,
) -> Result<IouStats, EvalError> {
    if pred.dims() != gt.dims() {
        return Err(EvalError::Shape(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if class_count == 0 || class_count > IGNORE_LABEL as usize {
        return Err(EvalError::Shape(format!(
            "class count must lie in [1, {}], got {class_count}",
            IGNORE_LABEL
        )));
    }
    let mut tp = vec![0u64; class_count];
    let mut fp = vec![0u64; class_count];
    let mut fn_ = vec![0u64; class_count];
    let mut in_gt = vec![false; class_count];
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if g == IGNORE_LABEL {
            continue;
        }
        if g as usize >= class_count {
            return Err(EvalError::Shape(format!(
                "ground-truth label {g} outside the {class_count}-class range"
            )));
        }
        in_gt[g as usize] = true;
        if p == IGNORE_LABEL {
            fn_[g as usize] += 1;
            continue;
        }
        if p as usize >= class_count {
            return Err(EvalError::Shape(format!(
                "predicted label {p} outside the {class_count}-class range"
            )));
        }
        if p == g {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[g as usize] += 1;
        }
    }
    let mut per_class = vec![None; class_count];
    let mut sum = 0.0;
    let mut evaluated_classes = 0usize;
    for k in 0..class_count {
        if !in_gt[k] {
            continue;
        }
        let union = tp[k] + fp[k] + fn_[k];
        let iou = tp[k] as f64 / union as f64;
        per_class[k] = Some(iou);
        sum += iou;
        evaluated_classes += 1;
    }
    let mean_percent = if evaluated_classes == 0 {
        0.0
    } else {
        100.0 * sum / evaluated_classes as f64
    };
    Ok(IouStats { per_class, mean_percent, evaluated_classes })
}

/// Size and work summary of one inference run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityStats {
    pub stixel_count: usize,
    pub stixels_per_column: f64,
    /// Stixel candidates scored, one plane fit plus one energy evaluation
    /// each. Grows quadratically in the cut rows per column.
    pub candidate_evals: u64,
    /// Predecessor states examined while chaining candidates.
    pub transition_evals: u64,
    pub mean_cut_density: f64,
    pub wall_ms: f64,
}

/// Combines the stixel count of `world` with the counters from its
/// inference run.
pub fn complexity_stats(world: &StixelWorld, stats: &InferStats, wall_ms: f64) -> ComplexityStats {
    let stixel_count = world.stixel_count();
    let columns = world.columns.len();
    ComplexityStats {
        stixel_count,
        stixels_per_column: if columns == 0 {
            0.0
        } else {
            stixel_count as f64 / columns as f64
        },
        candidate_evals: stats.segment_evals,
        transition_evals: stats.transition_evals,
        mean_cut_density: stats.mean_cut_density,
        wall_ms,
    }
}
