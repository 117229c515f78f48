//! `mew ingest`: manifest + table validation.

use crate::run_manifest::{RunManifest, Stopwatch};
use clap::Parser;
use mew_core::pipeline::load_dataset;
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the run manifest (default: ingest_run_manifest.json
    /// next to the dataset manifest).
    #[arg(long)]
    pub run_manifest: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let dataset = load_dataset(&args.manifest)?;
    watch.lap("load");

    let total_cells: usize = dataset.tables.values().map(|t| t.len()).sum();
    let typed = dataset.tables.values().filter(|t| t.fully_typed()).count();
    let report = serde_json::json!({
        "ok": true,
        "images": dataset.tables.len(),
        "cells": total_cells,
        "fully_typed_images": typed,
        "tasks": dataset.manifest.tasks,
    });

    let mut rm = RunManifest::new("ingest");
    rm.hash_input("manifest", &args.manifest)?;
    rm.output("images", dataset.tables.len().to_string());
    rm.timings_seconds = watch.finish();
    let rm_path = args
        .run_manifest
        .unwrap_or_else(|| args.manifest.with_file_name("ingest_run_manifest.json"));
    rm.save(&rm_path)?;

    println!("{report}");
    Ok(())
}
