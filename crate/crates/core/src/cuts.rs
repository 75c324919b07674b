//! Candidate cut rows. A cut at row v means a stixel may begin at v, so the
//! boundary below v is available to the segmentation. Restricting inference
//! to a sparse, measurement-driven cut set is what buys the speedup over
//! scanning every row.

use crate::energy::ColumnMeasurements;
use crate::model::ClassTaxonomy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("cut set: {0}")]
    Invalid(String),
}

/// How inference chooses the rows a stixel may begin at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutMode {
    /// Every row is a candidate. Exact and slow.
    Exact,
    /// Only rows marked by [`generate_cuts`]. Fast, and exact whenever the
    /// generated set contains the boundaries of the optimal tiling.
    Pruned(CutParams),
}

/// Knobs of [`generate_cuts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutParams {
    /// Adjacent-row disparity change that forces a cut.
    pub jump_threshold: f64,
    /// Neighborhood radius of the local extremum test. A radius of 0
    /// disables the extremum rule.
    pub window: usize,
}

impl Default for CutParams {
    fn default() -> Self {
        CutParams { jump_threshold: 3.0, window: 1 }
    }
}

/// Rows of one column at which a stixel may begin, each with a confidence
/// gamma in (0, 1]. Rows 0 and h - 1 are always present with confidence 1:
/// the bottom row starts the first stixel unconditionally, and a single-row
/// top stixel must stay representable.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSet {
    rows: Vec<usize>,
    gamma: Vec<f64>,
    column_rows: usize,
}

impl CutSet {
    pub fn new(rows: Vec<usize>, gamma: Vec<f64>, column_rows: usize) -> Result<Self, CutError> {
        if column_rows == 0 {
            return Err(CutError::Invalid("column has no rows".into()));
        }
        if rows.is_empty() {
            return Err(CutError::Invalid("no cut rows".into()));
        }
        if rows.len() != gamma.len() {
            return Err(CutError::Invalid(format!(
                "{} rows but {} confidences",
                rows.len(),
                gamma.len()
            )));
        }
        for pair in rows.windows(2) {
            if pair[0] >= pair[1] {
                return Err(CutError::Invalid("rows must be strictly increasing".into()));
            }
        }
        if *rows.last().unwrap() >= column_rows {
            return Err(CutError::Invalid(format!(
                "row {} outside a column of {column_rows} rows",
                rows.last().unwrap()
            )));
        }
        for (&row, &g) in rows.iter().zip(&gamma) {
            if !(g.is_finite() && g > 0.0 && g <= 1.0) {
                return Err(CutError::Invalid(format!("confidence {g} at row {row}")));
            }
        }
        let endpoints = [(0usize, "0"), (column_rows - 1, "h - 1")];
        for (row, name) in endpoints {
            match rows.binary_search(&row) {
                Ok(i) => {
                    if gamma[i] != 1.0 {
                        return Err(CutError::Invalid(format!(
                            "row {name} must have confidence 1"
                        )));
                    }
                }
                Err(_) => {
                    return Err(CutError::Invalid(format!("row {name} is missing")));
                }
            }
        }
        Ok(CutSet { rows, gamma, column_rows })
    }

    /// Every row, confidence 1. Inference over this set is exact.
    pub fn full(column_rows: usize) -> CutSet {
        assert!(column_rows > 0, "column has no rows");
        CutSet {
            rows: (0..column_rows).collect(),
            gamma: vec![1.0; column_rows],
            column_rows,
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn column_rows(&self) -> usize {
        self.column_rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fraction of rows kept as candidates, h' / h.
    pub fn density(&self) -> f64 {
        self.rows.len() as f64 / self.column_rows as f64
    }
}

/// Marks candidate cut rows from the measurements themselves: disparity
/// discontinuities and extrema, semantic label changes, and validity
/// toggles. Every emitted row has confidence 1; rows 0 and h - 1 are always
/// included. Changes between rows v - 1 and v are attributed to row v, the
/// bottom row of the would-be upper stixel.
pub fn generate_cuts(
    col: &ColumnMeasurements,
    taxonomy: &ClassTaxonomy,
    params: &CutParams,
) -> CutSet {
    debug_assert_eq!(col.class_count(), taxonomy.class_count());
    let h = col.rows();
    let argmin: Vec<usize> = (0..h).map(|v| col.argmin_semantic(v)).collect();
    let mut rows = Vec::new();
    for v in 0..h {
        let mut cut = v == 0 || v == h - 1;
        if !cut && col.is_valid(v) && col.is_valid(v - 1) {
            cut = (col.disparity(v) - col.disparity(v - 1)).abs() > params.jump_threshold;
        }
        if !cut && v > 0 {
            cut = col.is_valid(v) != col.is_valid(v - 1) || argmin[v] != argmin[v - 1];
        }
        if !cut && col.is_valid(v) {
            cut = is_strict_extremum(col, v, params.window);
        }
        if cut {
            rows.push(v);
        }
    }
    let gamma = vec![1.0; rows.len()];
    CutSet { rows, gamma, column_rows: h }
}

/// Whether the valid disparity at `v` is strictly above or strictly below
/// every valid neighbor within `window` rows. Plateaus are not extrema.
fn is_strict_extremum(col: &ColumnMeasurements, v: usize, window: usize) -> bool {
    let d = col.disparity(v);
    let lo = v.saturating_sub(window);
    let hi = (v + window).min(col.rows() - 1);
    let mut above_all = true;
    let mut below_all = true;
    let mut neighbors = 0;
    for u in lo..=hi {
        if u == v || !col.is_valid(u) {
            continue;
        }
        neighbors += 1;
        let n = col.disparity(u);
        above_all &= d > n;
        below_all &= d < n;
    }
    neighbors > 0 && (above_all || below_all)
}
