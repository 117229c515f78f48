//! Shared fixtures for the criterion benches.

use mew_core::cell_data::{Cell, CellTable};
use mew_core::model::{Activation, ModelDims, ModelParams, Pooling, TaskHead, Variant};
use mew_core::multiplex::{assemble_multiplex, MultiplexGraph};
use mew_core::cell_data::TaskKind;
use mew_core::geometry::delaunay_adjacency;
use mew_core::precompute::{precompute_image, PrecomputedFeatures};
use rand::Rng;

/// Synthetic image: uniform scatter, `types` cell types, `fb` biomarkers.
pub fn random_table(n: usize, types: usize, fb: usize, seed: u64) -> CellTable {
    let mut rng = mew_core::rng::stream(seed, 0xBE9C);
    let width = 100.0 * (n as f64).sqrt();
    let cells = (0..n)
        .map(|i| Cell {
            cell_id: i as u64,
            x: rng.random::<f64>() * width,
            y: rng.random::<f64>() * width,
            size: 20.0 + rng.random::<f64>() * 30.0,
            biomarkers: (0..fb).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            cell_type: Some(format!("t{}", rng.random_range(0..types))),
        })
        .collect();
    CellTable {
        image_id: format!("bench_{n}_{seed}"),
        biomarker_names: (0..fb).map(|d| format!("b{d}")).collect(),
        cells,
    }
}

pub fn graph_for(table: &CellTable) -> MultiplexGraph {
    let edges = delaunay_adjacency(&table.positions()).unwrap();
    assemble_multiplex(table, edges).unwrap()
}

pub fn features_for(graph: &MultiplexGraph, k: usize, seed: u64) -> PrecomputedFeatures {
    precompute_image(graph, k, seed, true).unwrap()
}

pub fn params_for(pf: &PrecomputedFeatures, d: usize) -> ModelParams {
    ModelParams::init(
        ModelDims {
            f: pf.f,
            d,
            k: pf.k,
            shared: true,
            variant: Variant::Attention,
            activation: Activation::Relu,
            pooling: Pooling::Mean,
            dropout: 0.0,
            tasks: vec![
                TaskHead { name: "cls".into(), kind: TaskKind::Binary },
                TaskHead { name: "surv".into(), kind: TaskKind::Hazard },
            ],
        },
        7,
    )
    .unwrap()
}
