//! `mew train`: model training on precomputed caches.

use crate::run_manifest::{RunManifest, Stopwatch};
use crate::{parse_activation, parse_pooling, parse_variant};
use clap::Parser;
use mew_core::model::{save_checkpoint, CheckpointMeta, PrecomputeMeta, SelectionMeta};
use mew_core::pipeline::{load_dataset, load_train_dataset};
use mew_core::precompute::CacheIndex;
use mew_core::training::{train, ModelOptions, TrainConfig};
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Training configuration (JSON with the TrainConfig keys).
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Branch/fusion variant: voronoi, celltype, sum, concat, attention.
    #[arg(long, default_value = "attention")]
    pub variant: String,
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long, default_value = "mean")]
    pub pooling: String,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let options = ModelOptions {
        variant: parse_variant(&args.variant)?,
        activation: parse_activation(&args.activation)?,
        pooling: parse_pooling(&args.pooling)?,
    };
    let config = TrainConfig::load(&args.config)?;
    let dataset = load_dataset(&args.manifest)?;
    let index = CacheIndex::load(&args.cache.join("index.json"))?;
    let mut data = load_train_dataset(&dataset, &index, &args.cache)?;
    watch.lap("load");

    let out = train(&mut data, &config, &options)?;
    watch.lap("train");

    let meta = CheckpointMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dims: out.params.dims.clone(),
        precompute: PrecomputeMeta {
            hops: index.hops,
            seed: index.seed,
            stochastic: index.stochastic,
            resample_each_epoch: index.resample_each_epoch,
        },
        standardize: index.standardize.clone(),
        selection: Some(SelectionMeta {
            metric: out.selection_metric.clone(),
            best_epoch: out.best_epoch,
            best_value: out.best_metric,
        }),
    };
    save_checkpoint(&out.params, &meta, &args.out)?;
    let history_path = args.out.with_extension("history.csv");
    std::fs::write(&history_path, out.history.to_csv())?;
    watch.lap("write");

    let mut rm = RunManifest::new("train");
    rm.config = serde_json::to_value(&config)?;
    rm.seeds.insert("train".into(), config.seed);
    rm.seeds.insert("build".into(), index.seed);
    rm.hash_input("manifest", &args.manifest)?;
    rm.hash_input("config", &args.config)?;
    rm.hash_input("cache_index", &args.cache.join("index.json"))?;
    rm.output("checkpoint", args.out.display().to_string());
    rm.output("history", history_path.display().to_string());
    rm.timings_seconds = watch.finish();
    rm.save(&args.out.with_extension("run_manifest.json"))?;

    println!(
        "{}",
        serde_json::json!({
            "checkpoint": args.out,
            "history": history_path,
            "best_epoch": out.best_epoch,
            "best_metric": out.best_metric,
            "selection_metric": out.selection_metric,
        })
    );
    Ok(())
}
