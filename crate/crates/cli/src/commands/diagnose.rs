//! `mew diagnose`: homophily and cell-count statistics.

use crate::run_manifest::{RunManifest, Stopwatch};
use crate::{parse_typing, svg};
use clap::Parser;
use mew_core::geometry::delaunay_adjacency;
use mew_core::pipeline::{diagnose, ensure_types, load_dataset};
use mew_core::Result;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for SVG histograms (skipped when absent).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Directory for per-image Voronoi edge dumps as CSV (i, j, d).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Report JSON output path (stdout always gets a copy).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub typing: String,
    #[arg(long, default_value_t = 8)]
    pub kmeans_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<()> {
    let mut watch = Stopwatch::start();
    let mut dataset = load_dataset(&args.manifest)?;
    ensure_types(&mut dataset, parse_typing(&args.typing)?, args.kmeans_k, args.seed)?;
    watch.lap("load");
    let report = diagnose(&dataset)?;
    watch.lap("diagnose");

    if let Some(edge_dir) = &args.edges {
        std::fs::create_dir_all(edge_dir)?;
        for (id, table) in &dataset.tables {
            let el = delaunay_adjacency(&table.positions())?;
            let mut csv = String::from("i,j,d\n");
            for e in &el.edges {
                csv.push_str(&format!("{},{},{}\n", e.i, e.j, e.dist));
            }
            std::fs::write(edge_dir.join(format!("{id}_edges.csv")), csv)?;
        }
    }

    if let Some(svg_dir) = &args.svg {
        std::fs::create_dir_all(svg_dir)?;
        let edges: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        std::fs::write(
            svg_dir.join("homophily_histogram.svg"),
            svg::histogram_svg("Voronoi homophily ratio", &edges, &report.homophily_histogram),
        )?;
        // cell counts in 10 bins over the observed range
        let (lo, hi) = (report.min_cells as f64, report.max_cells as f64 + 1.0);
        let mut counts = vec![0usize; 10];
        for diag in report.per_image.values() {
            let b = (((diag.n as f64 - lo) / (hi - lo)) * 10.0) as usize;
            counts[b.min(9)] += 1;
        }
        let edges: Vec<f64> = (0..=10).map(|i| lo + (hi - lo) * i as f64 / 10.0).collect();
        std::fs::write(
            svg_dir.join("cell_count_histogram.svg"),
            svg::histogram_svg("Cells per image", &edges, &counts),
        )?;
    }
    watch.lap("write");

    let report_json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{report_json}\n"))?;
    }
    let mut rm = RunManifest::new("diagnose");
    rm.hash_input("manifest", &args.manifest)?;
    rm.timings_seconds = watch.finish();
    let rm_path = args
        .out
        .as_ref()
        .map(|p| p.with_extension("run_manifest.json"))
        .unwrap_or_else(|| args.manifest.with_file_name("diagnose_run_manifest.json"));
    rm.save(&rm_path)?;

    println!("{report_json}");
    Ok(())
}
