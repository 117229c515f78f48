//! `mew build`: K-hop feature cache construction.

use crate::run_manifest::{RunManifest, Stopwatch};
use crate::{parse_typing, resolve_workers};
use clap::Parser;
use mew_core::pipeline::{build_caches, ensure_types, load_dataset, BuildOptions};
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub hops: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable stochastic edge sampling on the cell-type layer.
    #[arg(long)]
    pub no_stochastic: bool,
    /// Record that training should re-sample cell-type hops every epoch.
    #[arg(long)]
    pub resample_each_epoch: bool,
    /// Disable per-column feature standardization (train-split statistics).
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub cache: PathBuf,
    /// Worker threads (default: MEW_THREADS or 1).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Cell-type source: auto, kmeans, propagate, require.
    #[arg(long, default_value = "auto")]
    pub typing: String,
    #[arg(long, default_value_t = 8)]
    pub kmeans_k: usize,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let typing = parse_typing(&args.typing)?;
    let mut dataset = load_dataset(&args.manifest)?;
    watch.lap("load");
    ensure_types(&mut dataset, typing, args.kmeans_k, args.seed)?;
    watch.lap("typing");

    let opts = BuildOptions {
        hops: args.hops,
        seed: args.seed,
        stochastic: !args.no_stochastic,
        resample_each_epoch: args.resample_each_epoch,
        standardize: !args.no_standardize,
        workers: resolve_workers(args.workers),
    };
    let index = build_caches(&dataset, &args.cache, &opts)?;
    watch.lap("precompute");

    let mut rm = RunManifest::new("build");
    rm.config = serde_json::json!({
        "hops": opts.hops,
        "stochastic": opts.stochastic,
        "resample_each_epoch": opts.resample_each_epoch,
        "standardize": opts.standardize,
        "workers": opts.workers,
        "typing": args.typing,
        "kmeans_k": args.kmeans_k,
    });
    rm.seeds.insert("build".into(), args.seed);
    rm.hash_input("manifest", &args.manifest)?;
    rm.output("cache_dir", args.cache.display().to_string());
    rm.output("images", index.images.len().to_string());
    rm.timings_seconds = watch.finish();
    rm.save(&args.cache.join("run_manifest.json"))?;

    println!(
        "{}",
        serde_json::json!({
            "cache_dir": args.cache,
            "images": index.images.len(),
            "hops": index.hops,
        })
    );
    Ok(())
}
