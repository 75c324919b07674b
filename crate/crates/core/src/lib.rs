//! Column-wise scene segmentation from a disparity image and per-pixel
//! semantic scores. Each image column is tiled, bottom to top, with stixels:
//! vertical segments carrying one semantic class and a planar depth model.
//! The tiling minimizes an energy that scores depth residuals under a robust
//! sensor model, semantic label costs, plane priors, and the structural
//! plausibility of adjacent segments, and it is found exactly by dynamic
//! programming, optionally restricted to measurement-driven candidate rows.
//!
//! Row index 0 is the bottom of the image everywhere in this crate; the I/O
//! layer converts from top-down file formats on the way in and out.

pub mod cuts;
pub mod energy;
pub mod eval;
pub mod infer;
pub mod io;
pub mod model;
pub mod planefit;
