//! `mew synth`: synthetic dataset generation.

use crate::run_manifest::{RunManifest, Stopwatch};
use clap::Parser;
use mew_core::cell_data::{generate_synthetic, write_cell_table, SynthConfig};
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Generator configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let config = SynthConfig::load(&args.config)?;
    let (tables, manifest) = generate_synthetic(&config, args.seed)?;
    watch.lap("generate");

    std::fs::create_dir_all(args.out.join("cells"))?;
    for table in &tables {
        write_cell_table(table, &args.out.join(format!("cells/{}.csv", table.image_id)))?;
    }
    let manifest_path = args.out.join("manifest.json");
    manifest.save(&manifest_path)?;
    watch.lap("write");

    let mut rm = RunManifest::new("synth");
    rm.config = serde_json::to_value(&config)?;
    rm.seeds.insert("synth".into(), args.seed);
    rm.hash_input("config", &args.config)?;
    rm.output("manifest", manifest_path.display().to_string());
    rm.output("images", tables.len().to_string());
    rm.timings_seconds = watch.finish();
    rm.save(&args.out.join("run_manifest.json"))?;

    println!(
        "{}",
        serde_json::json!({
            "manifest": manifest_path,
            "images": tables.len(),
            "cells": tables.iter().map(|t| t.len()).sum::<usize>(),
        })
    );
    Ok(())
}
