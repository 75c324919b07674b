//! Versioned JSON serialization of stixel worlds.
//!
//! The document stores the grid metadata plus one entry per column; each
//! stixel is the array `[v_bottom, v_top, semantic_class, a, b, cost]`.
//! Geometric classes are not stored: they are recovered from the taxonomy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes, IoError};
use crate::model::{ClassTaxonomy, Plane, Stixel, StixelColumn, StixelWorld};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    version: u32,
    image_dims: (usize, usize),
    stixel_width: usize,
    vstep: usize,
    taxonomy: ClassTaxonomy,
    columns: Vec<ColumnFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnFile {
    total_energy: f64,
    stixels: Vec<(usize, usize, usize, f64, f64, f64)>,
}

/// Serializes a world to a pretty-printed JSON string.
pub fn world_to_json(world: &StixelWorld) -> Result<String, IoError> {
    world.validate()?;
    let file = WorldFile {
        version: FORMAT_VERSION,
        image_dims: world.image_dims,
        stixel_width: world.stixel_width,
        vstep: world.vstep,
        taxonomy: world.taxonomy.clone(),
        columns: world
            .columns
            .iter()
            .map(|c| ColumnFile {
                total_energy: c.total_energy,
                stixels: c
                    .stixels
                    .iter()
                    .map(|s| {
                        (s.v_bottom, s.v_top, s.semantic_class, s.plane.a, s.plane.b, s.cost)
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| IoError::Shape(format!("world serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Parses a world from JSON, re-checking every structural invariant.
pub fn world_from_json(text: &str) -> Result<StixelWorld, IoError> {
    let file: WorldFile = serde_json::from_str(text)
        .map_err(|e| IoError::Shape(format!("world schema violation: {e}")))?;
    if file.version != FORMAT_VERSION {
        return Err(IoError::Shape(format!(
            "unsupported world format version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let class_count = file.taxonomy.class_count();
    let mut columns = Vec::with_capacity(file.columns.len());
    for (x, column) in file.columns.into_iter().enumerate() {
        let mut stixels = Vec::with_capacity(column.stixels.len());
        for (i, (v_bottom, v_top, semantic_class, a, b, cost)) in
            column.stixels.into_iter().enumerate()
        {
            if semantic_class >= class_count {
                return Err(IoError::Shape(format!(
                    "column {x} stixel {i}: semantic class {semantic_class} outside the \
                     {class_count}-class taxonomy"
                )));
            }
            stixels.push(Stixel {
                v_bottom,
                v_top,
                semantic_class,
                geometric: file.taxonomy.geometric(semantic_class),
                plane: Plane::new(a, b),
                cost,
            });
        }
        columns.push(StixelColumn { index: x, stixels, total_energy: column.total_energy });
    }
    let world = StixelWorld {
        columns,
        stixel_width: file.stixel_width,
        vstep: file.vstep,
        image_dims: file.image_dims,
        taxonomy: file.taxonomy,
    };
    world.validate()?;
    Ok(world)
}

/// Writes a world as JSON to `path`.
pub fn save_world(path: impl AsRef<Path>, world: &StixelWorld) -> Result<(), IoError> {
    let text = world_to_json(world)?;
    write_bytes(path.as_ref(), text.as_bytes())
}

/// Reads a world from the JSON file at `path`.
pub fn load_world(path: impl AsRef<Path>) -> Result<StixelWorld, IoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| IoError::malformed(path, "file is not valid UTF-8"))?;
    world_from_json(text).map_err(|e| match e {
        IoError::Shape(reason) => IoError::malformed(path, reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeometricClass, SemanticClass};

    fn taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::new(vec![
            SemanticClass::new("road", GeometricClass::Ground),
            SemanticClass::new("car", GeometricClass::Object),
            SemanticClass::new("sky", GeometricClass::Sky),
        ])
        .unwrap()
    }

    fn sample_world() -> StixelWorld {
        StixelWorld {
            columns: vec![StixelColumn {
                index: 0,
                stixels: vec![
                    Stixel {
                        v_bottom: 0,
                        v_top: 2,
                        semantic_class: 0,
                        geometric: GeometricClass::Ground,
                        plane: Plane::new(12.25, -0.5),
                        cost: 3.75,
                    },
                    Stixel {
                        v_bottom: 3,
                        v_top: 3,
                        semantic_class: 2,
                        geometric: GeometricClass::Sky,
                        plane: Plane::new(0.0, 0.0),
                        cost: 1.0,
                    },
                ],
                total_energy: 4.75,
            }],
            stixel_width: 4,
            vstep: 2,
            image_dims: (4, 8),
            taxonomy: taxonomy(),
        }
    }

    #[test]
    fn round_trip_is_field_exact() {
        let world = sample_world();
        let text = world_to_json(&world).unwrap();
        let back = world_from_json(&text).unwrap();
        assert_eq!(back.image_dims, world.image_dims);
        assert_eq!(back.taxonomy, world.taxonomy);
        assert_eq!(back.columns, world.columns);
    }

    #[test]
    fn empty_world_round_trips() {
        let world = StixelWorld {
            columns: vec![],
            stixel_width: 8,
            vstep: 8,
            image_dims: (0, 0),
            taxonomy: taxonomy(),
        };
        let back = world_from_json(&world_to_json(&world).unwrap()).unwrap();
        assert_eq!(back.columns, world.columns);
        assert_eq!(back.image_dims, (0, 0));
    }

    #[test]
    fn geometric_class_is_recovered_from_the_taxonomy() {
        let text = world_to_json(&sample_world()).unwrap();
        // The only geometric annotations live in the taxonomy block, one per
        // class; the stixel tuples carry none.
        assert_eq!(text.matches("\"geometric\"").count(), 3);
        let back = world_from_json(&text).unwrap();
        assert_eq!(back.columns[0].stixels[0].geometric, GeometricClass::Ground);
        assert_eq!(back.columns[0].stixels[1].geometric, GeometricClass::Sky);
    }

    #[test]
    fn overlapping_stixels_are_rejected_with_the_column_named() {
        // Move the second stixel's v_bottom from 3 down to 2 in the raw text
        // so it overlaps the first, something save-side validation forbids.
        let text = world_to_json(&sample_world())
            .unwrap()
            .replace("[\n          3,", "[\n          2,");
        let err = world_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("column 0"), "{err}");
    }

    #[test]
    fn out_of_range_class_ids_name_the_stixel() {
        let text = world_to_json(&sample_world()).unwrap().replace(
            "          2,\n          0.0,",
            "          9,\n          0.0,",
        );
        let err = world_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("column 0 stixel 1"), "{err}");
        assert!(err.contains("semantic class 9"), "{err}");
    }

    #[test]
    fn version_and_unknown_fields_are_rejected() {
        let text = world_to_json(&sample_world()).unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(world_from_json(&bumped).unwrap_err().to_string().contains("version 2"));
        let extra = text.replacen("\"version\": 1", "\"version\": 1, \"zzz\": 0", 1);
        assert!(world_from_json(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        let world = sample_world();
        save_world(&path, &world).unwrap();
        let back = load_world(&path).unwrap();
        assert_eq!(back.columns, world.columns);
        assert!(load_world(dir.path().join("missing.json")).is_err());
    }
}
