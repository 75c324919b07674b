//! Closed-form MAP estimation of a stixel's plane. The posterior of (a, b)
//! under the Gaussian sensor model (outlier component excluded) and the
//! Gaussian parameter prior is a quadratic, so the fit reduces to a 2x2
//! linear solve over the precomputed segment moments.

use crate::energy::{ColumnPrefix, SegmentMoments};
use crate::model::{GeometricClass, ModelConfig, Plane};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlaneFitError {
    #[error("segment moments over rows {v_bottom}..={v_top} are not finite")]
    NonFiniteMoments { v_bottom: usize, v_top: usize },
    #[error("rows {v_bottom}..={v_top} out of range, column has {rows} rows")]
    RowsOutOfRange { v_bottom: usize, v_top: usize, rows: usize },
}

// Relative determinant floor below which the 2x2 system is treated as
// rank-deficient. Only reachable with fewer than two valid pixels and
// effectively flat priors; a single pixel under a flat prior yields a
// relative determinant near 1/sigma^2, while any informative prior keeps it
// orders of magnitude above this floor.
const DET_FLOOR: f64 = 1e-9;

/// Penalized weighted squared error of a plane on the given moments: the
/// quantity [`fit_plane_map`] minimizes. The prior's log-normalizer is
/// constant in (a, b) and not included.
pub fn fit_objective(
    m: &SegmentMoments,
    g: GeometricClass,
    plane: &Plane,
    config: &ModelConfig,
) -> f64 {
    let (a, b) = (plane.a, plane.b);
    let residual = m.wd2 - 2.0 * b * m.wvd - 2.0 * a * m.wd
        + b * b * m.wv2
        + 2.0 * a * b * m.wv
        + a * a * m.w;
    let prior = config.plane_priors[g];
    let mut penalty = 0.0;
    if !prior.clamp_a() {
        let q = (a - prior.mu_a) / prior.sigma_a;
        penalty += q * q;
    }
    if !prior.clamp_b() {
        let q = (b - prior.mu_b) / prior.sigma_b;
        penalty += q * q;
    }
    residual + penalty
}

fn fit_intercept_given_slope(m: &SegmentMoments, b: f64, mu_a: f64, inv_var_a: f64) -> f64 {
    (m.wd - b * m.wv + mu_a * inv_var_a) / (m.w + inv_var_a)
}

/// MAP plane for rows `v_bottom..=v_top` under geometric class `g`.
///
/// Minimizes the confidence-weighted squared disparity residual over valid
/// rows plus the standardized prior deviations. Hard-clamped parameters
/// (sigma 0) are fixed to their means and the remaining parameter solved in
/// closed form. Segments without any valid pixel return the prior mean. A
/// segment with fewer than two valid pixels and essentially flat priors
/// leaves the slope unidentified; the fit then falls back to the prior's
/// slope and solves for the intercept alone.
pub fn fit_plane_map(
    prefix: &ColumnPrefix,
    v_bottom: usize,
    v_top: usize,
    g: GeometricClass,
    config: &ModelConfig,
) -> Result<Plane, PlaneFitError> {
    if v_bottom > v_top || v_top >= prefix.rows() {
        return Err(PlaneFitError::RowsOutOfRange { v_bottom, v_top, rows: prefix.rows() });
    }
    let m = prefix.moments(g, v_bottom, v_top);
    for value in [m.w, m.wv, m.wv2, m.wd, m.wvd, m.wd2] {
        if !value.is_finite() {
            return Err(PlaneFitError::NonFiniteMoments { v_bottom, v_top });
        }
    }
    let prior = config.plane_priors[g];
    if m.valid == 0 {
        return Ok(prior.mean_plane());
    }
    let inv_var_a = if prior.clamp_a() { 0.0 } else { 1.0 / (prior.sigma_a * prior.sigma_a) };
    let inv_var_b = if prior.clamp_b() { 0.0 } else { 1.0 / (prior.sigma_b * prior.sigma_b) };

    let plane = match (prior.clamp_a(), prior.clamp_b()) {
        (true, true) => prior.mean_plane(),
        (true, false) => {
            let b = (m.wvd - prior.mu_a * m.wv + prior.mu_b * inv_var_b) / (m.wv2 + inv_var_b);
            Plane::new(prior.mu_a, b)
        }
        (false, true) => {
            let a = fit_intercept_given_slope(&m, prior.mu_b, prior.mu_a, inv_var_a);
            Plane::new(a, prior.mu_b)
        }
        (false, false) => {
            let a11 = m.w + inv_var_a;
            let a12 = m.wv;
            let a22 = m.wv2 + inv_var_b;
            let rhs_a = m.wd + prior.mu_a * inv_var_a;
            let rhs_b = m.wvd + prior.mu_b * inv_var_b;
            let det = a11 * a22 - a12 * a12;
            if m.valid < 2 && !(det > DET_FLOOR * a11 * a22) {
                let a = fit_intercept_given_slope(&m, prior.mu_b, prior.mu_a, inv_var_a);
                Plane::new(a, prior.mu_b)
            } else {
                let a = (rhs_a * a22 - a12 * rhs_b) / det;
                let b = (a11 * rhs_b - a12 * rhs_a) / det;
                Plane::new(a, b)
            }
        }
    };
    if !plane.is_finite() {
        return Err(PlaneFitError::NonFiniteMoments { v_bottom, v_top });
    }
    Ok(plane)
}
