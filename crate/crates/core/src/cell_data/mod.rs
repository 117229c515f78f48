//! Cell tables, dataset manifests, synthetic data, and cell-type fallbacks.

mod kmeans;
mod propagate;
mod synth;
mod table;

pub use kmeans::{kmeans_celltype, KmeansOptions};
pub use propagate::propagate_labels;
pub use synth::{generate_synthetic, Mechanism, SynthConfig, SynthTask};
pub use table::{
    load_cell_table, write_cell_table, Cell, CellTable, ColumnMapping, DatasetManifest,
    ImageEntry, Label, Split, TaskKind, TaskSpec,
};
