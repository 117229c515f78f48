//! `mew eval`: checkpoint evaluation on a split, from caches or by
//! recomputing features on the fly.

use crate::run_manifest::{RunManifest, Stopwatch};
use clap::Parser;
use mew_core::cell_data::Split;
use mew_core::error::Error;
use mew_core::model::load_checkpoint;
use mew_core::pipeline::{
    ensure_types, eval_split, load_dataset, scores_to_csv, BuildOptions, FeatureSource,
    TypingPolicy,
};
use mew_core::precompute::CacheIndex;
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache directory; optional when --recompute-on-the-fly is set.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// train, val, or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Print per-stage wall-clock timings to stdout as well.
    #[arg(long)]
    pub time: bool,
    /// Rebuild graphs and recompute K-hop features instead of reading caches.
    #[arg(long)]
    pub recompute_on_the_fly: bool,
    /// Report JSON output path (stdout always gets a copy).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-image score CSV output path.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => {
            return Err(Error::InvalidConfig {
                reason: format!("unknown split `{other}` (expected train|val|test)"),
            })
        }
    })
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let split = parse_split(&args.split)?;
    let (params, meta) = load_checkpoint(&args.ckpt)?;
    let mut dataset = load_dataset(&args.manifest)?;
    watch.lap("load");

    let (report, rows) = if args.recompute_on_the_fly {
        ensure_types(&mut dataset, TypingPolicy::Auto, 8, meta.precompute.seed)?;
        let opts = BuildOptions {
            hops: meta.precompute.hops,
            seed: meta.precompute.seed,
            stochastic: meta.precompute.stochastic,
            resample_each_epoch: false,
            standardize: meta.standardize.is_some(),
            workers: 1,
        };
        let source =
            FeatureSource::Recompute { opts: &opts, standardize: meta.standardize.as_ref() };
        eval_split(&dataset, &source, &params, split, &args.split)?
    } else {
        let cache = args.cache.clone().ok_or_else(|| Error::InvalidConfig {
            reason: "--cache is required unless --recompute-on-the-fly is set".into(),
        })?;
        let index = CacheIndex::load(&cache.join("index.json"))?;
        let source = FeatureSource::Cached { index: &index, cache_dir: &cache };
        eval_split(&dataset, &source, &params, split, &args.split)?
    };
    watch.lap("evaluate");

    let report_json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{report_json}\n"))?;
    }
    if let Some(scores) = &args.scores {
        std::fs::write(scores, scores_to_csv(&rows))?;
    }
    watch.lap("write");

    let timings = watch.finish();
    let mut rm = RunManifest::new("eval");
    rm.config = serde_json::json!({
        "split": args.split,
        "recompute_on_the_fly": args.recompute_on_the_fly,
    });
    rm.hash_input("manifest", &args.manifest)?;
    rm.hash_input("checkpoint", &args.ckpt)?;
    rm.timings_seconds = timings.clone();
    let rm_path = args
        .out
        .as_ref()
        .map(|p| p.with_extension("run_manifest.json"))
        .unwrap_or_else(|| args.manifest.with_file_name("eval_run_manifest.json"));
    rm.save(&rm_path)?;

    println!("{report_json}");
    if args.time {
        println!("{}", serde_json::json!({ "timings_seconds": timings }));
    }
    Ok(())
}
