//! `mew`: build multiplex cellular graphs from segmented-cell tables,
//! precompute K-hop features, train the two-branch attention model, and
//! evaluate phenotype predictions.

mod commands;
mod run_manifest;
mod svg;

use clap::{Parser, Subcommand};
use mew_core::Error;

#[derive(Parser)]
#[command(name = "mew", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (cell tables + manifest) on disk.
    Synth(commands::synth::Args),
    /// Validate a dataset manifest and every referenced cell table.
    Ingest(commands::ingest::Args),
    /// Precompute K-hop feature caches for every image.
    Build(commands::build::Args),
    /// Train a model on precomputed caches.
    Train(commands::train::Args),
    /// Evaluate a checkpoint on a split.
    Eval(commands::eval::Args),
    /// Homophily and cell-count diagnostics (with optional SVG histograms).
    Diagnose(commands::diagnose::Args),
    /// Score a single cell table with a trained checkpoint.
    Predict(commands::predict::Args),
    /// Run branch/fusion ablation variants.
    Ablate(commands::ablate::Args),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Build(args) => commands::build::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Diagnose(args) => commands::diagnose::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Ablate(args) => commands::ablate::run(args),
    };
    if let Err(e) = result {
        let payload = serde_json::json!({
            "error": e.code(),
            "message": e.to_string(),
            "validation": e.is_validation(),
        });
        eprintln!("{payload}");
        std::process::exit(if e.is_validation() { 2 } else { 3 });
    }
}

/// Worker count: --workers flag if given, else MEW_THREADS, else 1.
pub(crate) fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("MEW_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

/// Shared string-to-enum parsing for model switches.
pub(crate) fn parse_variant(s: &str) -> Result<mew_core::model::Variant, Error> {
    use mew_core::model::Variant;
    Ok(match s {
        "voronoi" => Variant::Voronoi,
        "celltype" => Variant::Celltype,
        "sum" => Variant::Sum,
        "concat" => Variant::Concat,
        "attention" => Variant::Attention,
        other => {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "unknown variant `{other}` (expected voronoi|celltype|sum|concat|attention)"
                ),
            })
        }
    })
}

pub(crate) fn parse_activation(s: &str) -> Result<mew_core::model::Activation, Error> {
    use mew_core::model::Activation;
    Ok(match s {
        "relu" => Activation::Relu,
        "prelu" => Activation::PRelu,
        "identity" => Activation::Identity,
        other => {
            return Err(Error::InvalidConfig {
                reason: format!("unknown activation `{other}` (expected relu|prelu|identity)"),
            })
        }
    })
}

pub(crate) fn parse_pooling(s: &str) -> Result<mew_core::model::Pooling, Error> {
    use mew_core::model::Pooling;
    Ok(match s {
        "mean" => Pooling::Mean,
        "max" => Pooling::Max,
        "sum" => Pooling::Sum,
        other => {
            return Err(Error::InvalidConfig {
                reason: format!("unknown pooling `{other}` (expected mean|max|sum)"),
            })
        }
    })
}

pub(crate) fn parse_typing(s: &str) -> Result<mew_core::pipeline::TypingPolicy, Error> {
    use mew_core::pipeline::TypingPolicy;
    Ok(match s {
        "auto" => TypingPolicy::Auto,
        "kmeans" => TypingPolicy::Kmeans,
        "propagate" => TypingPolicy::Propagate,
        "require" => TypingPolicy::Require,
        other => {
            return Err(Error::InvalidConfig {
                reason: format!("unknown typing policy `{other}`"),
            })
        }
    })
}
