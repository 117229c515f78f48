//! Core library for the `mew` pipeline.
//!
//! From segmented-cell tables to predictions, in stages:
//!
//! 1. [`cell_data`] loads or synthesizes per-image cell tables and dataset
//!    manifests, with K-Means and label-propagation fallbacks for cell types.
//! 2. [`geometry`] computes Delaunay (Voronoi-neighbor) adjacency and
//!    normalized inter-cell distances.
//! 3. [`multiplex`] assembles the two-layer graph: geometric edges plus
//!    same-cell-type pairs.
//! 4. [`precompute`] turns each layer into K-hop aggregated feature matrices
//!    (with distance-weighted stochastic edge sampling on the cell-type
//!    layer) and caches them to disk so training touches no graph structure.
//! 5. [`model`] runs the two-branch forward pass with attention fusion and
//!    per-task MLP heads; [`training`] owns losses, exact gradients, Adam,
//!    and the training loop; [`metrics`] scores predictions (AUC-ROC,
//!    concordance index).
//! 6. [`pipeline`] wires the stages together for the CLI and tests.

pub mod cell_data;
pub mod dense;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod multiplex;
pub mod pipeline;
pub mod precompute;
pub mod rng;
pub mod training;

pub use dense::Dense;
pub use error::{Error, Result};
