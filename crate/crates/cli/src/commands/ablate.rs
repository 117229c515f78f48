//! `mew ablate`: branch/fusion ablation grid.
//!
//! Trains and test-evaluates one variant (with --variant) or all five,
//! reusing exactly the `train` code path so `ablate --variant attention`
//! reproduces `train` byte for byte under the same seed.

use crate::run_manifest::{RunManifest, Stopwatch};
use crate::{parse_activation, parse_pooling, parse_variant};
use clap::Parser;
use mew_core::cell_data::Split;
use mew_core::model::{save_checkpoint, CheckpointMeta, PrecomputeMeta, SelectionMeta};
use mew_core::pipeline::{eval_split, load_dataset, load_train_dataset, FeatureSource};
use mew_core::precompute::CacheIndex;
use mew_core::training::{train, ModelOptions, TrainConfig};
use mew_core::Result;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for per-variant checkpoints and the summary.
    #[arg(long)]
    pub out: PathBuf,
    /// Run a single variant instead of the whole grid.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long, default_value = "mean")]
    pub pooling: String,
    /// Split to evaluate each trained variant on.
    #[arg(long, default_value = "test")]
    pub split: String,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let config = TrainConfig::load(&args.config)?;
    let dataset = load_dataset(&args.manifest)?;
    let index = CacheIndex::load(&args.cache.join("index.json"))?;
    std::fs::create_dir_all(&args.out)?;
    watch.lap("load");

    let variants: Vec<String> = match &args.variant {
        Some(v) => vec![v.clone()],
        None => ["voronoi", "celltype", "sum", "concat", "attention"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let split = match args.split.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        _ => Split::Test,
    };

    let mut summary = BTreeMap::new();
    for variant_name in &variants {
        let options = ModelOptions {
            variant: parse_variant(variant_name)?,
            activation: parse_activation(&args.activation)?,
            pooling: parse_pooling(&args.pooling)?,
        };
        let mut data = load_train_dataset(&dataset, &index, &args.cache)?;
        let out = train(&mut data, &config, &options)?;

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
        let ckpt_path = args.out.join(format!("{variant_name}.mew"));
        save_checkpoint(&out.params, &meta, &ckpt_path)?;
        std::fs::write(
            args.out.join(format!("{variant_name}.history.csv")),
            out.history.to_csv(),
        )?;

        let source = FeatureSource::Cached { index: &index, cache_dir: &args.cache };
        let (report, _) = eval_split(&dataset, &source, &out.params, split, &args.split)?;
        summary.insert(variant_name.clone(), report);
        watch.lap(variant_name);
    }

    let summary_path = args.out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&summary_path, &text)?;

    let mut rm = RunManifest::new("ablate");
    rm.config = serde_json::to_value(&config)?;
    rm.seeds.insert("train".into(), config.seed);
    rm.hash_input("manifest", &args.manifest)?;
    rm.hash_input("config", &args.config)?;
    rm.output("summary", summary_path.display().to_string());
    rm.timings_seconds = watch.finish();
    rm.save(&args.out.join("run_manifest.json"))?;

    println!("{text}");
    Ok(())
}
