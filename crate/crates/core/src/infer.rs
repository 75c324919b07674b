//! Column inference. Each column is tiled with stixels by minimizing the
//! total energy: per-segment data and prior terms plus pairwise terms
//! between vertically adjacent stixels (structural complexity, class
//! transition preferences, gravity and ordering consistency).
//!
//! Because the gravity and ordering terms read the fitted planes of both
//! neighbors, the cost of extending a solution depends on the entire last
//! segment, not just on the row where it ends. The dynamic program below
//! therefore keeps one state per (start boundary, end boundary, geometric
//! class) of the last segment, which preserves exact optimality. Segment
//! costs are shared between the dynamic program and the brute-force
//! reference through a single memo table, and both accumulate sums in the
//! same order, so agreement is bitwise, not approximate.

use crate::cuts::{generate_cuts, CutMode, CutSet};
use crate::energy::{segment_data_energy, ColumnPrefix, EnergyError, ImageMeasurements};
use crate::energy::{plane_prior_energy, ColumnMeasurements};
use crate::model::{GeometricClass, Model, ModelConfig, Stixel, StixelColumn, StixelWorld};
use crate::planefit::{fit_plane_map, PlaneFitError};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Tallest column [`brute_force_column`] accepts. The labeling count grows
/// as 3 * 4^(h - 1), so anything taller stops being a test oracle and
/// starts being a space heater.
pub const BRUTE_FORCE_MAX_ROWS: usize = 14;

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Fit(#[from] PlaneFitError),
    #[error("cut set spans {cut_rows} rows but the column has {rows}")]
    CutMismatch { cut_rows: usize, rows: usize },
    #[error("measurements carry {measured} classes but the taxonomy has {taxonomy}")]
    ClassCountMismatch { measured: usize, taxonomy: usize },
    #[error("disparity {disparity} at row {row} exceeds d_max = {d_max}")]
    DisparityAboveMax { row: usize, disparity: f64, d_max: f64 },
    #[error("stixels are not adjacent: lower ends at row {lower_top}, upper begins at row {upper_bottom}")]
    NotAdjacent { lower_top: usize, upper_bottom: usize },
    #[error("a first stixel must begin at row 0, this one begins at row {0}")]
    FirstNotAtBottom(usize),
    #[error("brute force caps at {max} rows, the column has {rows}")]
    TooTall { rows: usize, max: usize },
    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<InferError>,
    },
}

/// Work counters for one column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ColumnStats {
    /// Segment candidates evaluated: one plane fit plus one energy
    /// evaluation each. Bounded by 3 * h' * (h' + 1) / 2 for h' cut rows.
    pub segment_evals: u64,
    /// Predecessor states examined while extending solutions.
    pub transition_evals: u64,
    /// Cut rows the column was restricted to.
    pub cut_rows: usize,
}

/// Aggregated work counters for a whole image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InferStats {
    pub columns: usize,
    pub segment_evals: u64,
    pub transition_evals: u64,
    /// Mean over columns of (cut rows) / (column rows).
    pub mean_cut_density: f64,
}

/// Energy charged for the bottom stixel of a column.
pub fn first_energy(first: &Stixel, config: &ModelConfig) -> Result<f64, InferError> {
    if first.v_bottom != 0 {
        return Err(InferError::FirstNotAtBottom(first.v_bottom));
    }
    Ok(first_value(first.geometric, config))
}

/// Energy charged between two vertically adjacent stixels of one column.
pub fn transition_energy(
    lower: &Stixel,
    upper: &Stixel,
    config: &ModelConfig,
) -> Result<f64, InferError> {
    if upper.v_bottom != lower.v_top + 1 {
        return Err(InferError::NotAdjacent {
            lower_top: lower.v_top,
            upper_bottom: upper.v_bottom,
        });
    }
    Ok(transition_value(
        lower.geometric,
        lower.plane.disparity_at(lower.v_top as f64),
        upper.geometric,
        upper.plane.disparity_at(upper.v_bottom as f64),
        config,
    ))
}

fn first_value(g: GeometricClass, config: &ModelConfig) -> f64 {
    config.complexity_cost + config.first_costs[g]
}

/// `d_top` is the lower stixel's plane evaluated at its own top row,
/// `d_bottom` the upper stixel's plane at its own bottom row. Gravity pulls
/// an object's base onto the ground surface below it; ordering penalizes an
/// upper object that claims to be nearer than the object it rests on.
fn transition_value(
    lower: GeometricClass,
    d_top: f64,
    upper: GeometricClass,
    d_bottom: f64,
    config: &ModelConfig,
) -> f64 {
    let mut e = config.complexity_cost + config.transition_costs[lower][upper];
    match (lower, upper) {
        (GeometricClass::Ground, GeometricClass::Object) => {
            let dd = d_bottom - d_top;
            e += config.w_grav * dd * dd;
        }
        (GeometricClass::Object, GeometricClass::Object) => {
            let dd = (d_bottom - d_top).max(0.0);
            e += config.w_ord * dd * dd;
        }
        _ => {}
    }
    e
}

/// One fully evaluated segment hypothesis.
#[derive(Debug, Clone, Copy)]
struct SegmentCandidate {
    /// Data energy + plane prior + cut energy at the start row.
    cost: f64,
    plane: crate::model::Plane,
    semantic: u32,
    /// Plane evaluated at the segment's bottom row.
    d_bottom: f64,
    /// Plane evaluated at the segment's top row.
    d_top: f64,
}

/// Memoized segment costs over the boundary list `bounds[0] = 0 < ... <
/// bounds[m] = h`. Entry (i, j, g) describes rows bounds[i] ..= bounds[j]-1
/// under geometric class g. Both inference paths read from the same table,
/// which is what makes their outputs comparable bit for bit.
struct SegmentTable {
    bounds: Vec<usize>,
    cands: Vec<SegmentCandidate>,
}

impl SegmentTable {
    fn build(
        col: &ColumnMeasurements,
        prefix: &ColumnPrefix,
        model: &Model,
        cuts: &CutSet,
    ) -> Result<(SegmentTable, u64), InferError> {
        let config = model.config();
        let mut bounds: Vec<usize> = cuts.rows().to_vec();
        bounds.push(col.rows());
        let cut_energy: Vec<f64> = cuts
            .gamma()
            .iter()
            .map(|&g| -g.max(config.min_cut_confidence).ln())
            .collect();
        let m = bounds.len() - 1;
        let pairs = m * (m + 1) / 2;
        let mut cands = Vec::with_capacity(pairs * 3);
        let mut evals = 0u64;
        for j in 1..=m {
            for i in 0..j {
                let v_bottom = bounds[i];
                let v_top = bounds[j] - 1;
                for g in GeometricClass::ALL {
                    let plane = fit_plane_map(prefix, v_bottom, v_top, g, config)?;
                    let (data, class) =
                        segment_data_energy(col, prefix, v_bottom, v_top, g, &plane, model)?;
                    let cost = data + plane_prior_energy(g, &plane, config) + cut_energy[i];
                    debug_assert!(cost.is_finite());
                    evals += 1;
                    cands.push(SegmentCandidate {
                        cost,
                        plane,
                        semantic: class as u32,
                        d_bottom: plane.disparity_at(v_bottom as f64),
                        d_top: plane.disparity_at(v_top as f64),
                    });
                }
            }
        }
        Ok((SegmentTable { bounds, cands }, evals))
    }

    fn idx(&self, i: usize, j: usize, g: GeometricClass) -> usize {
        debug_assert!(i < j && j < self.bounds.len());
        (j * (j - 1) / 2 + i) * 3 + g.index()
    }

    fn cand(&self, i: usize, j: usize, g: GeometricClass) -> &SegmentCandidate {
        &self.cands[self.idx(i, j, g)]
    }
}

const NO_PRED: u32 = u32::MAX;

/// Best solution ending in a given last segment.
#[derive(Debug, Clone, Copy)]
struct ChainEntry {
    cost: f64,
    count: u32,
    /// Predecessor state packed as p * 3 + g', or NO_PRED for a first
    /// segment.
    pred: u32,
}

struct Dp<'a> {
    table: &'a SegmentTable,
    chain: Vec<ChainEntry>,
}

impl<'a> Dp<'a> {
    /// Path signature used to break exact energy ties: the (v_bottom,
    /// geometric index, semantic index) sequence from the bottom up. Ties go
    /// to fewer stixels first, then to the lexicographically smallest
    /// signature.
    fn path(&self, mut i: usize, mut j: usize, mut g: GeometricClass) -> Vec<(usize, usize, usize)> {
        let mut states = Vec::new();
        loop {
            states.push((i, j, g));
            let e = self.chain[self.table.idx(i, j, g)];
            if e.pred == NO_PRED {
                break;
            }
            let p = (e.pred / 3) as usize;
            let gp = GeometricClass::from_index((e.pred % 3) as usize).unwrap();
            j = i;
            i = p;
            g = gp;
        }
        states.reverse();
        states
            .into_iter()
            .map(|(i, j, g)| {
                let cand = self.table.cand(i, j, g);
                (self.table.bounds[i], g.index(), cand.semantic as usize)
            })
            .collect()
    }

    fn stixels(&self, mut i: usize, mut j: usize, mut g: GeometricClass) -> Vec<Stixel> {
        let mut out = Vec::new();
        loop {
            let cand = self.table.cand(i, j, g);
            out.push(Stixel {
                v_bottom: self.table.bounds[i],
                v_top: self.table.bounds[j] - 1,
                semantic_class: cand.semantic as usize,
                geometric: g,
                plane: cand.plane,
                cost: cand.cost,
            });
            let e = self.chain[self.table.idx(i, j, g)];
            if e.pred == NO_PRED {
                break;
            }
            let p = (e.pred / 3) as usize;
            let gp = GeometricClass::from_index((e.pred % 3) as usize).unwrap();
            j = i;
            i = p;
            g = gp;
        }
        out.reverse();
        out
    }
}

fn check_measurements(
    col: &ColumnMeasurements,
    model: &Model,
    cuts: &CutSet,
) -> Result<(), InferError> {
    if col.class_count() != model.taxonomy().class_count() {
        return Err(InferError::ClassCountMismatch {
            measured: col.class_count(),
            taxonomy: model.taxonomy().class_count(),
        });
    }
    if cuts.column_rows() != col.rows() {
        return Err(InferError::CutMismatch {
            cut_rows: cuts.column_rows(),
            rows: col.rows(),
        });
    }
    let d_max = model.config().d_max;
    for v in 0..col.rows() {
        if col.is_valid(v) && col.disparity(v) > d_max {
            return Err(InferError::DisparityAboveMax {
                row: v,
                disparity: col.disparity(v),
                d_max,
            });
        }
    }
    Ok(())
}

/// Minimum-energy tiling of one column restricted to the given cut rows.
/// With [`CutSet::full`] the result is the global optimum over every
/// possible tiling. The returned column has `index` 0; callers that know
/// the grid position overwrite it.
pub fn infer_column(
    col: &ColumnMeasurements,
    prefix: &ColumnPrefix,
    model: &Model,
    cuts: &CutSet,
) -> Result<StixelColumn, InferError> {
    infer_column_with_stats(col, prefix, model, cuts).map(|(c, _)| c)
}

pub fn infer_column_with_stats(
    col: &ColumnMeasurements,
    prefix: &ColumnPrefix,
    model: &Model,
    cuts: &CutSet,
) -> Result<(StixelColumn, ColumnStats), InferError> {
    check_measurements(col, model, cuts)?;
    let config = model.config();
    let (table, segment_evals) = SegmentTable::build(col, prefix, model, cuts)?;
    let m = table.bounds.len() - 1;
    let mut dp = Dp {
        table: &table,
        chain: vec![ChainEntry { cost: f64::INFINITY, count: 0, pred: NO_PRED }; table.cands.len()],
    };
    let mut transition_evals = 0u64;

    for j in 1..=m {
        for i in 0..j {
            for g in GeometricClass::ALL {
                let seg = table.cand(i, j, g).cost;
                let entry = if i == 0 {
                    ChainEntry { cost: first_value(g, config) + seg, count: 1, pred: NO_PRED }
                } else {
                    let d_bottom = table.cand(i, j, g).d_bottom;
                    let mut best: Option<ChainEntry> = None;
                    for p in 0..i {
                        for gp in GeometricClass::ALL {
                            let pe = dp.chain[table.idx(p, i, gp)];
                            let tau = transition_value(
                                gp,
                                table.cand(p, i, gp).d_top,
                                g,
                                d_bottom,
                                config,
                            );
                            let cand = ChainEntry {
                                cost: (pe.cost + tau) + seg,
                                count: pe.count + 1,
                                pred: (p * 3) as u32 + gp.index() as u32,
                            };
                            transition_evals += 1;
                            best = Some(match best {
                                None => cand,
                                Some(b) => pick(&dp, i, b, cand),
                            });
                        }
                    }
                    best.expect("i > 0 always has predecessors")
                };
                dp.chain[table.idx(i, j, g)] = entry;
            }
        }
    }

    let mut winner: Option<(usize, GeometricClass)> = None;
    for i in 0..m {
        for g in GeometricClass::ALL {
            winner = Some(match winner {
                None => (i, g),
                Some((bi, bg)) => {
                    let b = dp.chain[table.idx(bi, m, bg)];
                    let c = dp.chain[table.idx(i, m, g)];
                    if c.cost < b.cost
                        || (c.cost == b.cost
                            && (c.count < b.count
                                || (c.count == b.count && dp.path(i, m, g) < dp.path(bi, m, bg))))
                    {
                        (i, g)
                    } else {
                        (bi, bg)
                    }
                }
            });
        }
    }
    let (i, g) = winner.expect("at least one terminal state");
    let best = dp.chain[table.idx(i, m, g)];
    let column = StixelColumn {
        index: 0,
        stixels: dp.stixels(i, m, g),
        total_energy: best.cost,
    };
    debug_assert!(column.validate(col.rows(), model.taxonomy()).is_ok());
    let stats = ColumnStats { segment_evals, transition_evals, cut_rows: cuts.len() };
    Ok((column, stats))
}

/// Choose between two ways of reaching the same state (i, j, g). Both end
/// in the identical segment, so comparing the predecessor paths compares
/// the full solutions.
fn pick(dp: &Dp, i: usize, best: ChainEntry, cand: ChainEntry) -> ChainEntry {
    if cand.cost < best.cost {
        return cand;
    }
    if cand.cost > best.cost {
        return best;
    }
    if cand.count != best.count {
        return if cand.count < best.count { cand } else { best };
    }
    let unpack = |e: &ChainEntry| {
        let p = (e.pred / 3) as usize;
        let g = GeometricClass::from_index((e.pred % 3) as usize).unwrap();
        (p, g)
    };
    let (cp, cg) = unpack(&cand);
    let (bp, bg) = unpack(&best);
    if dp.path(cp, i, cg) < dp.path(bp, i, bg) {
        cand
    } else {
        best
    }
}

/// Exhaustive minimum over every tiling and class assignment, with the same
/// segment memo table, accumulation order, and tie policy as the dynamic
/// program. Intended purely as a correctness oracle, hence the hard row
/// cap.
pub fn brute_force_column(
    col: &ColumnMeasurements,
    prefix: &ColumnPrefix,
    model: &Model,
    max_rows: usize,
) -> Result<StixelColumn, InferError> {
    let cap = max_rows.min(BRUTE_FORCE_MAX_ROWS);
    if col.rows() > cap {
        return Err(InferError::TooTall { rows: col.rows(), max: cap });
    }
    let cuts = CutSet::full(col.rows());
    check_measurements(col, model, &cuts)?;
    let config = model.config();
    let (table, _) = SegmentTable::build(col, prefix, model, &cuts)?;
    let m = table.bounds.len() - 1;

    struct Best {
        cost: f64,
        path: Vec<(usize, usize, usize)>,
        states: Vec<(usize, usize, GeometricClass)>,
    }
    struct Walk<'a> {
        table: &'a SegmentTable,
        config: &'a ModelConfig,
        m: usize,
        states: Vec<(usize, usize, GeometricClass)>,
        path: Vec<(usize, usize, usize)>,
        best: Option<Best>,
    }
    impl Walk<'_> {
        fn go(&mut self, cur: usize, running: f64) {
            if cur == self.m {
                let better = match &self.best {
                    None => true,
                    Some(b) => {
                        running < b.cost
                            || (running == b.cost
                                && (self.path.len() < b.path.len()
                                    || (self.path.len() == b.path.len() && self.path < b.path)))
                    }
                };
                if better {
                    self.best = Some(Best {
                        cost: running,
                        path: self.path.clone(),
                        states: self.states.clone(),
                    });
                }
                return;
            }
            for j in cur + 1..=self.m {
                for g in GeometricClass::ALL {
                    let cand = self.table.cand(cur, j, g);
                    let value = if cur == 0 {
                        first_value(g, self.config) + cand.cost
                    } else {
                        let &(p, i, gp) = self.states.last().unwrap();
                        let tau = transition_value(
                            gp,
                            self.table.cand(p, i, gp).d_top,
                            g,
                            cand.d_bottom,
                            self.config,
                        );
                        (running + tau) + cand.cost
                    };
                    self.states.push((cur, j, g));
                    self.path
                        .push((self.table.bounds[cur], g.index(), cand.semantic as usize));
                    self.go(j, value);
                    self.states.pop();
                    self.path.pop();
                }
            }
        }
    }

    let mut walk = Walk {
        table: &table,
        config,
        m,
        states: Vec::new(),
        path: Vec::new(),
        best: None,
    };
    walk.go(0, 0.0);
    let best = walk.best.expect("a column always has at least one tiling");
    let stixels = best
        .states
        .iter()
        .map(|&(i, j, g)| {
            let cand = table.cand(i, j, g);
            Stixel {
                v_bottom: table.bounds[i],
                v_top: table.bounds[j] - 1,
                semantic_class: cand.semantic as usize,
                geometric: g,
                plane: cand.plane,
                cost: cand.cost,
            }
        })
        .collect();
    Ok(StixelColumn { index: 0, stixels, total_energy: best.cost })
}

/// Tile every column of an image. Columns are processed in parallel but
/// collected in grid order, and nothing about the result depends on the
/// number of worker threads.
pub fn infer_image(
    measurements: &ImageMeasurements,
    model: &Model,
    mode: CutMode,
) -> Result<(StixelWorld, InferStats), InferError> {
    let results: Result<Vec<(StixelColumn, ColumnStats)>, InferError> = measurements
        .columns()
        .par_iter()
        .enumerate()
        .map(|(x, col)| {
            let wrap = |e: InferError| InferError::Column { column: x, source: Box::new(e) };
            let prefix = ColumnPrefix::build(col, model.config());
            let cuts = match &mode {
                CutMode::Exact => CutSet::full(col.rows()),
                CutMode::Pruned(params) => generate_cuts(col, model.taxonomy(), params),
            };
            let (mut column, stats) =
                infer_column_with_stats(col, &prefix, model, &cuts).map_err(wrap)?;
            column.index = x;
            Ok((column, stats))
        })
        .collect();
    let results = results?;

    let mut stats = InferStats { columns: results.len(), ..InferStats::default() };
    let mut density_sum = 0.0;
    let mut columns = Vec::with_capacity(results.len());
    for (column, cs) in results {
        stats.segment_evals += cs.segment_evals;
        stats.transition_evals += cs.transition_evals;
        density_sum += cs.cut_rows as f64 / measurements.rows() as f64;
        columns.push(column);
    }
    if stats.columns > 0 {
        stats.mean_cut_density = density_sum / stats.columns as f64;
    }

    let world = StixelWorld {
        columns,
        stixel_width: measurements.stixel_width(),
        vstep: measurements.vstep(),
        image_dims: measurements.image_dims(),
        taxonomy: model.taxonomy().clone(),
    };
    debug_assert!(world.validate().is_ok());
    Ok((world, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::INVALID_DISPARITY;
    use crate::model::{ClassTaxonomy, Plane, SemanticClass};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::new(vec![
            SemanticClass::new("road", GeometricClass::Ground),
            SemanticClass::new("grass", GeometricClass::Ground),
            SemanticClass::new("car", GeometricClass::Object),
            SemanticClass::new("sky", GeometricClass::Sky),
        ])
        .unwrap()
    }

    fn model() -> Model {
        Model::new(ModelConfig::default(), taxonomy()).unwrap()
    }

    fn random_column(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> ColumnMeasurements {
        let disparity: Vec<f64> = (0..rows)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    INVALID_DISPARITY
                } else {
                    rng.gen_range(0.0..60.0)
                }
            })
            .collect();
        let confidence: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.2..=1.0)).collect();
        let costs: Vec<f64> = (0..rows * classes).map(|_| rng.gen_range(0.0..6.0)).collect();
        ColumnMeasurements::new(disparity, confidence, costs, classes).unwrap()
    }

    fn assert_identical(a: &StixelColumn, b: &StixelColumn) {
        assert_eq!(
            a.total_energy.to_bits(),
            b.total_energy.to_bits(),
            "energies differ: {} vs {}",
            a.total_energy,
            b.total_energy
        );
        assert_eq!(a.stixels.len(), b.stixels.len());
        for (s, t) in a.stixels.iter().zip(&b.stixels) {
            assert_eq!(s.v_bottom, t.v_bottom);
            assert_eq!(s.v_top, t.v_top);
            assert_eq!(s.semantic_class, t.semantic_class);
            assert_eq!(s.geometric, t.geometric);
            assert_eq!(s.plane.a.to_bits(), t.plane.a.to_bits());
            assert_eq!(s.plane.b.to_bits(), t.plane.b.to_bits());
            assert_eq!(s.cost.to_bits(), t.cost.to_bits());
        }
    }

    #[test]
    fn single_row_column_yields_one_stixel() {
        let model = model();
        let col = ColumnMeasurements::new(
            vec![12.0],
            vec![1.0],
            vec![0.1, 3.0, 3.0, 3.0],
            4,
        )
        .unwrap();
        let prefix = ColumnPrefix::build(&col, model.config());
        let out = infer_column(&col, &prefix, &model, &CutSet::full(1)).unwrap();
        assert_eq!(out.stixels.len(), 1);
        assert_eq!(out.stixels[0].rows(), 1);
        out.validate(1, model.taxonomy()).unwrap();
    }

    #[test]
    fn dp_matches_brute_force_on_random_columns() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for rows in [1usize, 2, 3, 5, 7] {
            for _ in 0..12 {
                let col = random_column(&mut rng, rows, 4);
                let prefix = ColumnPrefix::build(&col, model.config());
                let dp = infer_column(&col, &prefix, &model, &CutSet::full(rows)).unwrap();
                let bf = brute_force_column(&col, &prefix, &model, rows).unwrap();
                assert_identical(&dp, &bf);
                dp.validate(rows, model.taxonomy()).unwrap();
            }
        }
    }

    #[test]
    fn coupled_transitions_still_match_brute_force() {
        // Crank the gravity and ordering weights so the optimal tiling is
        // decided by plane interactions, the regime where a per-row state
        // would go wrong.
        let mut config = ModelConfig::default();
        config.w_grav = 4.0;
        config.w_ord = 4.0;
        config.complexity_cost = 0.5;
        let model = Model::new(config, taxonomy()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..15 {
            let col = random_column(&mut rng, 6, 4);
            let prefix = ColumnPrefix::build(&col, model.config());
            let dp = infer_column(&col, &prefix, &model, &CutSet::full(6)).unwrap();
            let bf = brute_force_column(&col, &prefix, &model, 6).unwrap();
            assert_identical(&dp, &bf);
        }
    }

    #[test]
    fn pruning_to_the_optimal_boundaries_changes_nothing() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let col = random_column(&mut rng, 9, 4);
            let prefix = ColumnPrefix::build(&col, model.config());
            let exact = infer_column(&col, &prefix, &model, &CutSet::full(9)).unwrap();
            let mut rows: Vec<usize> = exact.stixels.iter().map(|s| s.v_bottom).collect();
            if *rows.last().unwrap() != 8 {
                rows.push(8);
            }
            let gamma = vec![1.0; rows.len()];
            let cuts = CutSet::new(rows, gamma, 9).unwrap();
            let pruned = infer_column(&col, &prefix, &model, &cuts).unwrap();
            assert_identical(&exact, &pruned);
        }
    }

    #[test]
    fn gravity_penalizes_a_floating_object() {
        let mut config = ModelConfig::default();
        config.w_grav = 0.7;
        let ground = Stixel {
            v_bottom: 0,
            v_top: 9,
            semantic_class: 0,
            geometric: GeometricClass::Ground,
            plane: Plane { a: 2.0, b: 0.5 },
            cost: 0.0,
        };
        let object = Stixel {
            v_bottom: 10,
            v_top: 20,
            semantic_class: 2,
            geometric: GeometricClass::Object,
            plane: Plane { a: 10.0, b: 0.0 },
            cost: 0.0,
        };
        // Ground reaches disparity 6.5 at its top row, the object sits at 10.
        let tau = transition_energy(&ground, &object, &config).unwrap();
        let base = config.complexity_cost
            + config.transition_costs[GeometricClass::Ground][GeometricClass::Object];
        assert!((tau - (base + 0.7 * 3.5 * 3.5)).abs() < 1e-12);
    }

    #[test]
    fn ordering_penalizes_only_a_nearer_upper_object() {
        let mut config = ModelConfig::default();
        config.w_ord = 1.3;
        let make = |v_bottom: usize, v_top: usize, a: f64| Stixel {
            v_bottom,
            v_top,
            semantic_class: 2,
            geometric: GeometricClass::Object,
            plane: Plane { a, b: 0.0 },
            cost: 0.0,
        };
        let lower = make(0, 4, 7.0);
        let base = config.complexity_cost
            + config.transition_costs[GeometricClass::Object][GeometricClass::Object];
        // Upper object farther away (smaller disparity): no penalty.
        let tau = transition_energy(&lower, &make(5, 9, 3.0), &config).unwrap();
        assert!((tau - base).abs() < 1e-12);
        // Upper object nearer (larger disparity): quadratic penalty.
        let tau = transition_energy(&lower, &make(5, 9, 10.0), &config).unwrap();
        assert!((tau - (base + 1.3 * 9.0)).abs() < 1e-12);
    }

    #[test]
    fn adjacency_and_bottom_row_are_enforced() {
        let config = ModelConfig::default();
        let s = |v_bottom: usize, v_top: usize| Stixel {
            v_bottom,
            v_top,
            semantic_class: 0,
            geometric: GeometricClass::Ground,
            plane: Plane { a: 1.0, b: 0.0 },
            cost: 0.0,
        };
        assert!(matches!(
            transition_energy(&s(0, 4), &s(6, 9), &config),
            Err(InferError::NotAdjacent { lower_top: 4, upper_bottom: 6 })
        ));
        assert!(matches!(
            first_energy(&s(3, 5), &config),
            Err(InferError::FirstNotAtBottom(3))
        ));
        assert!(first_energy(&s(0, 5), &config).is_ok());
    }

    #[test]
    fn uncertain_cut_rows_charge_their_log_confidence() {
        // Two sharply separated semantic segments force a boundary at row 2;
        // lowering that row's confidence must raise the energy by exactly
        // -ln(gamma).
        let mut costs = vec![0.0; 4 * 4];
        for v in 0..4 {
            for k in 0..4 {
                let preferred = if v < 2 { 0 } else { 2 };
                costs[v * 4 + k] = if k == preferred { 0.0 } else { 9.0 };
            }
        }
        let col =
            ColumnMeasurements::new(vec![5.0; 4], vec![1.0; 4], costs, 4).unwrap();
        let model = model();
        let prefix = ColumnPrefix::build(&col, model.config());
        let certain = CutSet::new(vec![0, 2, 3], vec![1.0, 1.0, 1.0], 4).unwrap();
        let shaky = CutSet::new(vec![0, 2, 3], vec![1.0, 0.5, 1.0], 4).unwrap();
        let e1 = infer_column(&col, &prefix, &model, &certain).unwrap();
        let e2 = infer_column(&col, &prefix, &model, &shaky).unwrap();
        assert_eq!(e1.stixels.len(), 2);
        assert_eq!(e2.stixels.len(), 2);
        assert!(
            (e2.total_energy - e1.total_energy - 0.5f64.ln().abs()).abs() < 1e-12,
            "expected a ln 2 gap, got {}",
            e2.total_energy - e1.total_energy
        );
    }

    #[test]
    fn cut_confidence_is_floored_before_the_log() {
        let mut config = ModelConfig::default();
        config.min_cut_confidence = 1e-3;
        let model = Model::new(config, taxonomy()).unwrap();
        let mut costs = vec![0.0; 4 * 4];
        for v in 0..4 {
            for k in 0..4 {
                let preferred = if v < 2 { 0 } else { 2 };
                costs[v * 4 + k] = if k == preferred { 0.0 } else { 9.0 };
            }
        }
        let col =
            ColumnMeasurements::new(vec![5.0; 4], vec![1.0; 4], costs, 4).unwrap();
        let prefix = ColumnPrefix::build(&col, model.config());
        let faint = CutSet::new(vec![0, 2, 3], vec![1.0, 1e-9, 1.0], 4).unwrap();
        let floored = CutSet::new(vec![0, 2, 3], vec![1.0, 1e-3, 1.0], 4).unwrap();
        let a = infer_column(&col, &prefix, &model, &faint).unwrap();
        let b = infer_column(&col, &prefix, &model, &floored).unwrap();
        assert_identical(&a, &b);
    }

    #[test]
    fn an_all_invalid_column_still_tiles() {
        let model = model();
        let col = ColumnMeasurements::new(
            vec![INVALID_DISPARITY; 6],
            vec![1.0; 6],
            vec![1.0; 24],
            4,
        )
        .unwrap();
        let prefix = ColumnPrefix::build(&col, model.config());
        let out = infer_column(&col, &prefix, &model, &CutSet::full(6)).unwrap();
        out.validate(6, model.taxonomy()).unwrap();
        let bf = brute_force_column(&col, &prefix, &model, 6).unwrap();
        assert_identical(&out, &bf);
    }

    #[test]
    fn work_counters_match_the_closed_forms() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let col = random_column(&mut rng, 8, 4);
        let prefix = ColumnPrefix::build(&col, model.config());
        let (_, stats) =
            infer_column_with_stats(&col, &prefix, &model, &CutSet::full(8)).unwrap();
        // 3 classes over every (start, end) pair of 8 boundaries.
        assert_eq!(stats.segment_evals, 3 * 8 * 9 / 2);
        // 9 class pairs over every (pred start, split, end) triple.
        let m = 8u64;
        assert_eq!(stats.transition_evals, 9 * (m * m * m - m) / 6);
        assert_eq!(stats.cut_rows, 8);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let model = model();
        let col =
            ColumnMeasurements::new(vec![5.0; 4], vec![1.0; 4], vec![1.0; 16], 4).unwrap();
        let prefix = ColumnPrefix::build(&col, model.config());
        // Cut set built for a different height.
        let cuts = CutSet::full(5);
        assert!(matches!(
            infer_column(&col, &prefix, &model, &cuts),
            Err(InferError::CutMismatch { .. })
        ));
        // Disparity beyond d_max.
        let far = ColumnMeasurements::new(
            vec![5.0, 500.0, 5.0, 5.0],
            vec![1.0; 4],
            vec![1.0; 16],
            4,
        )
        .unwrap();
        let p = ColumnPrefix::build(&far, model.config());
        assert!(matches!(
            infer_column(&far, &p, &model, &CutSet::full(4)),
            Err(InferError::DisparityAboveMax { row: 1, .. })
        ));
        // Wrong class count.
        let narrow =
            ColumnMeasurements::new(vec![5.0; 4], vec![1.0; 4], vec![1.0; 8], 2).unwrap();
        let p = ColumnPrefix::build(&narrow, model.config());
        assert!(matches!(
            infer_column(&narrow, &p, &model, &CutSet::full(4)),
            Err(InferError::ClassCountMismatch { .. })
        ));
        // Brute force refuses tall columns.
        let tall = ColumnMeasurements::new(
            vec![5.0; 20],
            vec![1.0; 20],
            vec![1.0; 80],
            4,
        )
        .unwrap();
        let p = ColumnPrefix::build(&tall, model.config());
        assert!(matches!(
            brute_force_column(&tall, &p, &model, 20),
            Err(InferError::TooTall { rows: 20, max: BRUTE_FORCE_MAX_ROWS })
        ));
    }

    #[test]
    fn image_inference_preserves_grid_order() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let columns: Vec<ColumnMeasurements> =
            (0..5).map(|_| random_column(&mut rng, 7, 4)).collect();
        let meas = ImageMeasurements::new(columns, 2, 3, (10, 21)).unwrap();
        let (world, stats) = infer_image(&meas, &model, CutMode::Exact).unwrap();
        world.validate().unwrap();
        assert_eq!(world.columns.len(), 5);
        for (x, col) in world.columns.iter().enumerate() {
            assert_eq!(col.index, x);
        }
        assert_eq!(stats.columns, 5);
        assert_eq!(stats.mean_cut_density, 1.0);
        assert_eq!(stats.segment_evals, 5 * 3 * 7 * 8 / 2);
        // Same input, same output, run to run.
        let (again, _) = infer_image(&meas, &model, CutMode::Exact).unwrap();
        for (a, b) in world.columns.iter().zip(&again.columns) {
            assert_identical(a, b);
        }
    }
}
