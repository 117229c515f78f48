//! `mew predict`: score one cell table with a trained checkpoint.

use crate::run_manifest::{RunManifest, Stopwatch};
use clap::Parser;
use mew_core::cell_data::{
    kmeans_celltype, load_cell_table, propagate_labels, ColumnMapping, KmeansOptions,
};
use mew_core::geometry::delaunay_adjacency;
use mew_core::model::load_checkpoint;
use mew_core::pipeline::predict_one;
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Cell table CSV.
    #[arg(long)]
    pub cells: PathBuf,
    /// Column mapping JSON (defaults to canonical column names).
    #[arg(long)]
    pub columns: Option<PathBuf>,
    /// K for the K-Means fallback when the table has no type annotations.
    #[arg(long, default_value_t = 8)]
    pub kmeans_k: usize,
    /// Sampling seed for stochastic feature construction.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let columns = match &args.columns {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ColumnMapping::default(),
    };
    let image_id = args
        .image_id
        .clone()
        .or_else(|| args.cells.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "image".to_string());
    let mut table = load_cell_table(&args.cells, &image_id, &columns)?;
    let (params, meta) = load_checkpoint(&args.ckpt)?;
    watch.lap("load");

    if !table.fully_typed() {
        if table.any_typed() {
            let edges = delaunay_adjacency(&table.positions())?;
            table = propagate_labels(&table, &edges, 1000, 1e-9)?;
        } else {
            table = kmeans_celltype(
                std::slice::from_ref(&table),
                &KmeansOptions::new(args.kmeans_k, args.seed),
            )?
            .pop()
            .unwrap();
        }
    }
    watch.lap("typing");

    let report = predict_one(&table, &params, &meta, args.seed)?;
    watch.lap("predict");

    let report_json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{report_json}\n"))?;
    }
    let mut rm = RunManifest::new("predict");
    rm.seeds.insert("sampling".into(), args.seed);
    rm.hash_input("cells", &args.cells)?;
    rm.hash_input("checkpoint", &args.ckpt)?;
    rm.timings_seconds = watch.finish();
    let rm_path = args
        .out
        .as_ref()
        .map(|p| p.with_extension("run_manifest.json"))
        .unwrap_or_else(|| args.cells.with_file_name("predict_run_manifest.json"));
    rm.save(&rm_path)?;

    println!("{report_json}");
    Ok(())
}
