//! Generators and comparison helpers shared by the integration suites.

#![allow(dead_code)]

use rand::Rng;

use stixel_core::energy::ColumnMeasurements;
use stixel_core::model::{
    ClassTaxonomy, GeometricClass, ModelConfig, PerGeometric, Plane, PlanePrior, SemanticClass,
    Stixel, StixelColumn, StixelWorld,
};

pub fn taxonomy3() -> ClassTaxonomy {
    ClassTaxonomy::new(vec![
        SemanticClass::new("road", GeometricClass::Ground),
        SemanticClass::new("car", GeometricClass::Object),
        SemanticClass::new("sky", GeometricClass::Sky),
    ])
    .unwrap()
}

pub fn taxonomy6() -> ClassTaxonomy {
    ClassTaxonomy::new(vec![
        SemanticClass::new("road", GeometricClass::Ground),
        SemanticClass::new("sidewalk", GeometricClass::Ground),
        SemanticClass::new("car", GeometricClass::Object),
        SemanticClass::new("person", GeometricClass::Object),
        SemanticClass::new("building", GeometricClass::Object),
        SemanticClass::new("sky", GeometricClass::Sky),
    ])
    .unwrap()
}

/// A random but always-valid configuration: weights, priors and transition
/// tables are drawn from sane ranges, and clamped priors appear regularly so
/// those code paths stay covered.
pub fn random_config(rng: &mut impl Rng) -> ModelConfig {
    let ground_prior = random_prior(rng, 0.25);
    let object_prior = PlanePrior::new(
        rng.gen_range(-5.0..20.0),
        rng.gen_range(0.5..200.0),
        0.0,
        // Objects are usually fronto-parallel but occasionally free.
        if rng.gen_bool(0.7) { 0.0 } else { rng.gen_range(0.1..1.0) },
    );
    ModelConfig {
        p_out: rng.gen_range(0.05..0.4),
        d_max: 128.0,
        sigma_noise: PerGeometric::new(
            rng.gen_range(0.4..2.5),
            rng.gen_range(0.4..2.5),
            rng.gen_range(0.4..2.5),
        ),
        w_l: rng.gen_range(0.2..2.0),
        invalid_cost: rng.gen_range(0.0..1.5),
        plane_priors: PerGeometric::new(ground_prior, object_prior, PlanePrior::clamped(0.0, 0.0)),
        complexity_cost: rng.gen_range(0.5..4.0),
        first_costs: PerGeometric::new(
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
        ),
        transition_costs: PerGeometric::from_fn(|_| {
            PerGeometric::new(
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
            )
        }),
        w_grav: rng.gen_range(0.0..2.0),
        w_ord: rng.gen_range(0.0..2.0),
        min_cut_confidence: 1.0e-3,
    }
}

fn random_prior(rng: &mut impl Rng, clamp_chance: f64) -> PlanePrior {
    let sigma_a = if rng.gen_bool(clamp_chance) { 0.0 } else { rng.gen_range(0.5..100.0) };
    let sigma_b = if rng.gen_bool(clamp_chance) { 0.0 } else { rng.gen_range(0.2..4.0) };
    PlanePrior::new(rng.gen_range(0.0..30.0), sigma_a, rng.gen_range(-1.5..1.5), sigma_b)
}

/// Random measurements: disparities in `[0, 120)` with a share of invalid
/// rows, confidences in `(0, 1]`, and uncorrelated semantic costs.
pub fn random_column(rng: &mut impl Rng, rows: usize, class_count: usize) -> ColumnMeasurements {
    random_column_with_invalid(rng, rows, class_count, 0.2)
}

pub fn random_column_with_invalid(
    rng: &mut impl Rng,
    rows: usize,
    class_count: usize,
    invalid_share: f64,
) -> ColumnMeasurements {
    let disparity: Vec<f64> = (0..rows)
        .map(|_| {
            if rng.gen_bool(invalid_share) {
                -1.0
            } else {
                rng.gen_range(0.0..120.0)
            }
        })
        .collect();
    let confidence: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.05..=1.0)).collect();
    let semantic_cost: Vec<f64> =
        (0..rows * class_count).map(|_| rng.gen_range(0.0..6.0)).collect();
    ColumnMeasurements::new(disparity, confidence, semantic_cost, class_count).unwrap()
}

/// A structurally valid random world for round-trip checks.
pub fn random_world(rng: &mut impl Rng) -> StixelWorld {
    let taxonomy = if rng.gen_bool(0.5) { taxonomy3() } else { taxonomy6() };
    let grid_cols = rng.gen_range(0..=4);
    let grid_rows = rng.gen_range(1..=6);
    let stixel_width = rng.gen_range(1..=8);
    let vstep = rng.gen_range(1..=8);
    let columns = (0..grid_cols)
        .map(|index| {
            let mut stixels = Vec::new();
            let mut v = 0;
            while v < grid_rows {
                let top = rng.gen_range(v..grid_rows);
                let class = rng.gen_range(0..taxonomy.class_count());
                let geometric = taxonomy.geometric(class);
                let plane = if geometric == GeometricClass::Sky {
                    Plane::new(0.0, 0.0)
                } else {
                    Plane::new(rng.gen_range(-5.0..100.0), rng.gen_range(-3.0..3.0))
                };
                stixels.push(Stixel {
                    v_bottom: v,
                    v_top: top,
                    semantic_class: class,
                    geometric,
                    plane,
                    cost: rng.gen_range(-2.0..50.0),
                });
                v = top + 1;
            }
            StixelColumn { index, stixels, total_energy: rng.gen_range(-5.0..500.0) }
        })
        .collect();
    StixelWorld {
        columns,
        stixel_width,
        vstep,
        image_dims: (grid_cols * stixel_width, grid_rows * vstep),
        taxonomy,
    }
}

/// Asserts two segmentations are the same down to the float bits, which is
/// what the shared-accumulation design guarantees.
pub fn assert_columns_identical(a: &StixelColumn, b: &StixelColumn, what: &str) {
    assert_eq!(
        a.total_energy.to_bits(),
        b.total_energy.to_bits(),
        "{what}: energies differ: {} vs {}",
        a.total_energy,
        b.total_energy
    );
    assert_eq!(a.stixels.len(), b.stixels.len(), "{what}: stixel counts differ");
    for (i, (s, t)) in a.stixels.iter().zip(&b.stixels).enumerate() {
        assert_eq!(s.v_bottom, t.v_bottom, "{what}: stixel {i} v_bottom");
        assert_eq!(s.v_top, t.v_top, "{what}: stixel {i} v_top");
        assert_eq!(s.semantic_class, t.semantic_class, "{what}: stixel {i} class");
        assert_eq!(s.geometric, t.geometric, "{what}: stixel {i} geometric");
        assert_eq!(s.plane.a.to_bits(), t.plane.a.to_bits(), "{what}: stixel {i} plane a");
        assert_eq!(s.plane.b.to_bits(), t.plane.b.to_bits(), "{what}: stixel {i} plane b");
        assert_eq!(s.cost.to_bits(), t.cost.to_bits(), "{what}: stixel {i} cost");
    }
}
