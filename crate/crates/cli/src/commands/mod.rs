pub mod ablate;
pub mod build;
pub mod diagnose;
pub mod eval;
pub mod ingest;
pub mod predict;
pub mod synth;
pub mod train;
