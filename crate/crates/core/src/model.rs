//! Scene model types shared by the whole pipeline: geometric classes, the
//! semantic taxonomy, disparity-space planes, stixels, and the tunable
//! model configuration with its validation rules.

use serde::{Deserialize, Serialize};
use std::ops::Index;
use thiserror::Error;

/// Errors produced while building or validating model types.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("invalid configuration: {}", violations.join("; "))]
    Config { violations: Vec<String> },
    #[error("stixel column {column}: {reason}")]
    InvalidColumn { column: usize, reason: String },
    #[error("stixel world: {0}")]
    InvalidWorld(String),
}

/// Coarse structural role of a stixel. Every semantic class maps to exactly
/// one of these, and all depth priors and transition rules are keyed by them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricClass {
    Ground,
    Object,
    Sky,
}

impl GeometricClass {
    pub const ALL: [GeometricClass; 3] = [
        GeometricClass::Ground,
        GeometricClass::Object,
        GeometricClass::Sky,
    ];

    /// Stable index used for tables and tie-breaking (ground 0, object 1, sky 2).
    pub fn index(self) -> usize {
        match self {
            GeometricClass::Ground => 0,
            GeometricClass::Object => 1,
            GeometricClass::Sky => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<GeometricClass> {
        GeometricClass::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GeometricClass::Ground => "ground",
            GeometricClass::Object => "object",
            GeometricClass::Sky => "sky",
        }
    }
}

/// One value per geometric class, indexable by [`GeometricClass`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerGeometric<T> {
    pub ground: T,
    pub object: T,
    pub sky: T,
}

impl<T> PerGeometric<T> {
    pub fn new(ground: T, object: T, sky: T) -> Self {
        PerGeometric { ground, object, sky }
    }

    /// Builds a table by evaluating `f` for each geometric class.
    pub fn from_fn(mut f: impl FnMut(GeometricClass) -> T) -> Self {
        PerGeometric {
            ground: f(GeometricClass::Ground),
            object: f(GeometricClass::Object),
            sky: f(GeometricClass::Sky),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (GeometricClass, &T)> {
        GeometricClass::ALL.iter().map(move |&g| (g, &self[g]))
    }
}

impl<T: Clone> PerGeometric<T> {
    pub fn uniform(value: T) -> Self {
        PerGeometric {
            ground: value.clone(),
            object: value.clone(),
            sky: value,
        }
    }
}

impl<T> Index<GeometricClass> for PerGeometric<T> {
    type Output = T;

    fn index(&self, g: GeometricClass) -> &T {
        match g {
            GeometricClass::Ground => &self.ground,
            GeometricClass::Object => &self.object,
            GeometricClass::Sky => &self.sky,
        }
    }
}

/// A named semantic class together with its structural role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticClass {
    pub name: String,
    pub geometric: GeometricClass,
}

impl SemanticClass {
    pub fn new(name: impl Into<String>, geometric: GeometricClass) -> Self {
        SemanticClass { name: name.into(), geometric }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaxonomy {
    semantic_classes: Vec<SemanticClass>,
}

/// Ordered list of semantic classes. Class indices used everywhere else
/// (score tensors, stixel labels) are positions in this list.
///
/// Invariants: names are unique and non-empty, and every geometric class has
/// at least one semantic class mapping to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTaxonomy", into = "RawTaxonomy")]
pub struct ClassTaxonomy {
    semantic_classes: Vec<SemanticClass>,
    by_geometric: [Vec<usize>; 3],
}

impl PartialEq for ClassTaxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.semantic_classes == other.semantic_classes
    }
}

impl TryFrom<RawTaxonomy> for ClassTaxonomy {
    type Error = ModelError;

    fn try_from(raw: RawTaxonomy) -> Result<Self, ModelError> {
        ClassTaxonomy::new(raw.semantic_classes)
    }
}

impl From<ClassTaxonomy> for RawTaxonomy {
    fn from(t: ClassTaxonomy) -> RawTaxonomy {
        RawTaxonomy { semantic_classes: t.semantic_classes }
    }
}

impl ClassTaxonomy {
    pub fn new(semantic_classes: Vec<SemanticClass>) -> Result<Self, ModelError> {
        let mut by_geometric: [Vec<usize>; 3] = Default::default();
        for (k, class) in semantic_classes.iter().enumerate() {
            if class.name.is_empty() {
                return Err(ModelError::Taxonomy(format!("class {k} has an empty name")));
            }
            if semantic_classes[..k].iter().any(|c| c.name == class.name) {
                return Err(ModelError::Taxonomy(format!(
                    "duplicate class name {:?}",
                    class.name
                )));
            }
            by_geometric[class.geometric.index()].push(k);
        }
        for g in GeometricClass::ALL {
            if by_geometric[g.index()].is_empty() {
                return Err(ModelError::Taxonomy(format!(
                    "no semantic class maps to {}",
                    g.name()
                )));
            }
        }
        Ok(ClassTaxonomy { semantic_classes, by_geometric })
    }

    /// Number of semantic classes.
    pub fn class_count(&self) -> usize {
        self.semantic_classes.len()
    }

    pub fn classes(&self) -> &[SemanticClass] {
        &self.semantic_classes
    }

    pub fn name(&self, class: usize) -> &str {
        &self.semantic_classes[class].name
    }

    pub fn geometric(&self, class: usize) -> GeometricClass {
        self.semantic_classes[class].geometric
    }

    /// Semantic class indices mapping to `g`, in taxonomy order.
    pub fn semantic_classes_of(&self, g: GeometricClass) -> &[usize] {
        &self.by_geometric[g.index()]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.semantic_classes.iter().position(|c| c.name == name)
    }
}

/// Depth model of a stixel: expected disparity as a line over the row index,
/// `d(v) = b * v + a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plane {
    /// Disparity at row 0.
    pub a: f64,
    /// Disparity change per row.
    pub b: f64,
}

impl Plane {
    pub const fn new(a: f64, b: f64) -> Self {
        Plane { a, b }
    }

    /// Expected disparity at (possibly fractional) row `v`.
    pub fn disparity_at(&self, v: f64) -> f64 {
        self.b * v + self.a
    }

    /// Reparameterizes the same line for a column whose `rows` row indices
    /// run in the opposite direction (`v' = rows - 1 - v`).
    pub fn flipped_rows(&self, rows: usize) -> Plane {
        Plane {
            a: self.a + self.b * (rows - 1) as f64,
            b: -self.b,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

/// Gaussian prior over the plane parameters of one geometric class.
/// A sigma of exactly 0 clamps that parameter to its mean instead of
/// penalizing deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanePrior {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
}

impl PlanePrior {
    pub const fn new(mu_a: f64, sigma_a: f64, mu_b: f64, sigma_b: f64) -> Self {
        PlanePrior { mu_a, sigma_a, mu_b, sigma_b }
    }

    /// Fully clamped prior pinning the plane to `(mu_a, mu_b)`.
    pub const fn clamped(mu_a: f64, mu_b: f64) -> Self {
        PlanePrior { mu_a, sigma_a: 0.0, mu_b, sigma_b: 0.0 }
    }

    /// Whether the intercept is hard-clamped to `mu_a`.
    pub fn clamp_a(&self) -> bool {
        self.sigma_a == 0.0
    }

    /// Whether the slope is hard-clamped to `mu_b`.
    pub fn clamp_b(&self) -> bool {
        self.sigma_b == 0.0
    }

    pub fn mean_plane(&self) -> Plane {
        Plane::new(self.mu_a, self.mu_b)
    }

    /// Same mean line expressed for reversed row indices (`v' = rows - 1 - v`).
    /// The sigmas are kept as-is; they describe the caller's chosen widths,
    /// not a propagated covariance.
    pub fn flipped_rows(&self, rows: usize) -> PlanePrior {
        let mean = self.mean_plane().flipped_rows(rows);
        PlanePrior {
            mu_a: mean.a,
            sigma_a: self.sigma_a,
            mu_b: mean.b,
            sigma_b: self.sigma_b,
        }
    }
}

/// One stixel: a vertical run of rows in a column with a single semantic
/// class and a planar depth model. Row indices are inclusive and count from
/// the bottom of the image (`v_bottom = 0` is the lowest row).
#[derive(Debug, Clone, PartialEq)]
pub struct Stixel {
    pub v_bottom: usize,
    pub v_top: usize,
    pub semantic_class: usize,
    pub geometric: GeometricClass,
    pub plane: Plane,
    /// Energy contributed by this stixel (data, plane prior and cut terms).
    pub cost: f64,
}

impl Stixel {
    /// Number of rows covered.
    pub fn rows(&self) -> usize {
        self.v_top - self.v_bottom + 1
    }
}

/// Complete bottom-up tiling of one image column.
#[derive(Debug, Clone, PartialEq)]
pub struct StixelColumn {
    /// Index of the column in the downsampled grid.
    pub index: usize,
    /// Stixels ordered bottom to top, tiling `[0, h - 1]` exactly.
    pub stixels: Vec<Stixel>,
    /// Total energy of the column segmentation, including transition terms.
    pub total_energy: f64,
}

impl StixelColumn {
    /// Checks the tiling and labeling invariants against a column of height
    /// `h` and the given taxonomy.
    pub fn validate(&self, h: usize, taxonomy: &ClassTaxonomy) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::InvalidColumn { column: self.index, reason };
        if self.stixels.is_empty() {
            return Err(fail("empty tiling".into()));
        }
        if !self.total_energy.is_finite() {
            return Err(fail(format!("non-finite total energy {}", self.total_energy)));
        }
        let mut expected_bottom = 0usize;
        for (i, s) in self.stixels.iter().enumerate() {
            if s.v_bottom != expected_bottom {
                return Err(fail(format!(
                    "stixel {i} starts at row {} but row {expected_bottom} is next",
                    s.v_bottom
                )));
            }
            if s.v_top < s.v_bottom || s.v_top >= h {
                return Err(fail(format!(
                    "stixel {i} spans rows {}..={} outside 0..{h}",
                    s.v_bottom, s.v_top
                )));
            }
            if s.semantic_class >= taxonomy.class_count() {
                return Err(fail(format!(
                    "stixel {i} labels unknown class {}",
                    s.semantic_class
                )));
            }
            if taxonomy.geometric(s.semantic_class) != s.geometric {
                return Err(fail(format!(
                    "stixel {i} pairs class {:?} with {}",
                    taxonomy.name(s.semantic_class),
                    s.geometric.name()
                )));
            }
            if s.geometric == GeometricClass::Sky && (s.plane.a != 0.0 || s.plane.b != 0.0) {
                return Err(fail(format!("sky stixel {i} carries a non-zero plane")));
            }
            if !s.plane.is_finite() || !s.cost.is_finite() {
                return Err(fail(format!("stixel {i} has non-finite plane or cost")));
            }
            expected_bottom = s.v_top + 1;
        }
        if expected_bottom != h {
            return Err(fail(format!(
                "tiling ends at row {} but the column has {h} rows",
                expected_bottom - 1
            )));
        }
        Ok(())
    }
}

/// Segmentation result for a whole image.
#[derive(Debug, Clone, PartialEq)]
pub struct StixelWorld {
    pub columns: Vec<StixelColumn>,
    /// Full-resolution pixel width of each stixel column.
    pub stixel_width: usize,
    /// Full-resolution rows aggregated into one downsampled row.
    pub vstep: usize,
    /// Full-resolution image size as (width, height).
    pub image_dims: (usize, usize),
    pub taxonomy: ClassTaxonomy,
}

impl StixelWorld {
    /// Downsampled column count implied by the image size.
    pub fn grid_columns(&self) -> usize {
        self.image_dims.0 / self.stixel_width
    }

    /// Downsampled rows per column implied by the image size.
    pub fn grid_rows(&self) -> usize {
        self.image_dims.1 / self.vstep
    }

    pub fn stixel_count(&self) -> usize {
        self.columns.iter().map(|c| c.stixels.len()).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.stixel_width == 0 || self.vstep == 0 {
            return Err(ModelError::InvalidWorld(
                "stixel_width and vstep must be at least 1".into(),
            ));
        }
        if self.columns.len() != self.grid_columns() {
            return Err(ModelError::InvalidWorld(format!(
                "{} columns but the grid has {}",
                self.columns.len(),
                self.grid_columns()
            )));
        }
        let rows = self.grid_rows();
        for (i, column) in self.columns.iter().enumerate() {
            if column.index != i {
                return Err(ModelError::InvalidWorld(format!(
                    "column at position {i} is indexed {}",
                    column.index
                )));
            }
            column.validate(rows, &self.taxonomy)?;
        }
        Ok(())
    }
}

/// Stereo rig description used to derive the ground plane prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoCalibration {
    /// Focal length in pixels.
    pub focal_px: f64,
    /// Stereo baseline in meters.
    pub baseline_m: f64,
    /// Camera height above the ground in meters.
    pub cam_height_m: f64,
    /// Downward pitch of the optical axis in radians.
    pub pitch_rad: f64,
    /// Principal point row in pixels, counted from the top of the image.
    pub cy_px: f64,
}

/// Mean ground plane implied by the rig geometry.
///
/// A flat ground surface projects to an exact line in (row, disparity) space
/// with slope `(B/H) * cos(pitch)` and intercept `(B/H) * (f * sin(pitch) -
/// cy * cos(pitch))`, where rows count from the top of the image as in the
/// projection. The returned slope is already expressed per downsampled row
/// (multiplied by `vstep`); use [`PlanePrior::flipped_rows`] to express the
/// line for bottom-origin columns. The sigmas are taken from the caller.
pub fn ground_prior_from_calibration(
    calib: &StereoCalibration,
    vstep: usize,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<PlanePrior, ModelError> {
    if vstep == 0 {
        return Err(ModelError::Calibration("vstep must be at least 1".into()));
    }
    if !(calib.baseline_m > 0.0) || !(calib.cam_height_m > 0.0) || !(calib.focal_px > 0.0) {
        return Err(ModelError::Calibration(
            "focal_px, baseline_m and cam_height_m must be positive".into(),
        ));
    }
    if !(sigma_a >= 0.0) || !(sigma_b >= 0.0) {
        return Err(ModelError::Calibration("sigmas must be non-negative".into()));
    }
    let ratio = calib.baseline_m / calib.cam_height_m;
    let (sin_p, cos_p) = calib.pitch_rad.sin_cos();
    let mu_b = ratio * cos_p * vstep as f64;
    let mu_a = ratio * (calib.focal_px * sin_p - calib.cy_px * cos_p);
    if !mu_a.is_finite() || !mu_b.is_finite() {
        return Err(ModelError::Calibration("derived prior is not finite".into()));
    }
    Ok(PlanePrior { mu_a, sigma_a, mu_b, sigma_b })
}

/// All tunable knobs of the segmentation model. See [`validate_config`] for
/// the accepted ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Outlier mass of the disparity sensor model, in (0, 1).
    pub p_out: f64,
    /// Upper end of the disparity measurement range.
    pub d_max: f64,
    /// Disparity noise scale per geometric class.
    pub sigma_noise: PerGeometric<f64>,
    /// Weight of the semantic term relative to the depth term.
    pub w_l: f64,
    /// Energy charged for a pixel without a disparity measurement.
    pub invalid_cost: f64,
    /// Plane parameter priors per geometric class. The sky prior must be
    /// fully clamped to (0, 0); sky stixels carry no depth.
    pub plane_priors: PerGeometric<PlanePrior>,
    /// Constant energy charged per stixel, controlling segmentation granularity.
    pub complexity_cost: f64,
    /// Extra energy for the class of the bottom-most stixel.
    pub first_costs: PerGeometric<f64>,
    /// Transition energies in nats, indexed as `transition_costs[lower][upper]`.
    pub transition_costs: PerGeometric<PerGeometric<f64>>,
    /// Weight of the squared disparity gap for ground-to-object transitions.
    pub w_grav: f64,
    /// Weight of the squared depth-ordering violation for stacked objects.
    pub w_ord: f64,
    /// Lower bound applied to cut confidences before taking the log.
    pub min_cut_confidence: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            p_out: 0.15,
            d_max: 128.0,
            sigma_noise: PerGeometric::uniform(1.0),
            w_l: 1.0,
            invalid_cost: 0.0,
            plane_priors: PerGeometric::new(
                // Ground may slant; the wide intercept prior leaves the fit
                // to the data unless a calibration-derived prior is set.
                PlanePrior::new(0.0, 1.0e4, 0.0, 1.0),
                // Objects default to fronto-parallel (constant disparity).
                PlanePrior::new(0.0, 1.0e4, 0.0, 0.0),
                PlanePrior::clamped(0.0, 0.0),
            ),
            complexity_cost: 3.0,
            first_costs: PerGeometric::uniform(0.0),
            transition_costs: PerGeometric::new(
                // lower = ground
                PerGeometric::new(0.0, 0.0, 0.5),
                // lower = object
                PerGeometric::new(1.5, 0.5, 0.0),
                // lower = sky
                PerGeometric::new(6.0, 4.0, 2.0),
            ),
            w_grav: 0.1,
            w_ord: 0.1,
            min_cut_confidence: 1.0e-3,
        }
    }
}

/// A configuration checked against a taxonomy, ready for inference.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    taxonomy: ClassTaxonomy,
}

impl Model {
    /// Validates the configuration and pairs it with the taxonomy. Shorthand
    /// for [`validate_config`].
    pub fn new(config: ModelConfig, taxonomy: ClassTaxonomy) -> Result<Model, ModelError> {
        validate_config(config, taxonomy)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }
}

fn check_weight(violations: &mut Vec<String>, field: &str, value: f64) {
    if !(value.is_finite() && value >= 0.0) {
        violations.push(format!("{field} must be finite and non-negative, got {value}"));
    }
}

/// Validates every field of `config`, pairs it with `taxonomy`, and returns
/// the bundle used by the inference routines. All violations are reported at
/// once, each naming the offending field.
pub fn validate_config(config: ModelConfig, taxonomy: ClassTaxonomy) -> Result<Model, ModelError> {
    let mut violations = Vec::new();
    if !(config.p_out > 0.0 && config.p_out < 1.0) {
        violations.push(format!("p_out must lie in (0, 1), got {}", config.p_out));
    }
    if !(config.d_max.is_finite() && config.d_max > 0.0) {
        violations.push(format!("d_max must be finite and positive, got {}", config.d_max));
    }
    for (g, &sigma) in config.sigma_noise.iter() {
        if !(sigma.is_finite() && sigma > 0.0) {
            violations.push(format!(
                "sigma_noise.{} must be finite and positive, got {sigma}",
                g.name()
            ));
        }
    }
    check_weight(&mut violations, "w_l", config.w_l);
    check_weight(&mut violations, "invalid_cost", config.invalid_cost);
    check_weight(&mut violations, "complexity_cost", config.complexity_cost);
    check_weight(&mut violations, "w_grav", config.w_grav);
    check_weight(&mut violations, "w_ord", config.w_ord);
    for (g, prior) in config.plane_priors.iter() {
        let field = format!("plane_priors.{}", g.name());
        for (name, value) in [("mu_a", prior.mu_a), ("mu_b", prior.mu_b)] {
            if !value.is_finite() {
                violations.push(format!("{field}.{name} must be finite, got {value}"));
            }
        }
        for (name, value) in [("sigma_a", prior.sigma_a), ("sigma_b", prior.sigma_b)] {
            if !(value.is_finite() && value >= 0.0) {
                violations.push(format!(
                    "{field}.{name} must be finite and non-negative, got {value}"
                ));
            }
        }
    }
    let sky = config.plane_priors.sky;
    if sky != PlanePrior::clamped(0.0, 0.0) {
        violations.push(
            "plane_priors.sky must clamp the plane to zero \
             (mu_a = mu_b = 0 with sigma_a = sigma_b = 0)"
                .into(),
        );
    }
    for (g, &cost) in config.first_costs.iter() {
        check_weight(&mut violations, &format!("first_costs.{}", g.name()), cost);
    }
    for (lower, row) in config.transition_costs.iter() {
        for (upper, &cost) in row.iter() {
            check_weight(
                &mut violations,
                &format!("transition_costs.{}.{}", lower.name(), upper.name()),
                cost,
            );
        }
    }
    if !(config.min_cut_confidence >= 0.0 && config.min_cut_confidence <= 1.0) {
        violations.push(format!(
            "min_cut_confidence must lie in [0, 1], got {}",
            config.min_cut_confidence
        ));
    }
    if violations.is_empty() {
        Ok(Model { config, taxonomy })
    } else {
        Err(ModelError::Config { violations })
    }
}
