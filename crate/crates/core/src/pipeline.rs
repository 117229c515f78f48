//! End-to-end orchestration: dataset loading, cell-type fallback policy,
//! cache building, evaluation, and single-image prediction.

use crate::cell_data::{
    kmeans_celltype, load_cell_table, propagate_labels, CellTable, DatasetManifest, KmeansOptions,
    Label, Split, TaskKind,
};
use crate::error::{Error, Result};
use crate::geometry::delaunay_adjacency;
use crate::metrics::{
    auc_roc, c_index_detailed, task_score, AttentionReport, EvalReport, TaskReport,
};
use crate::model::{full_forward, CheckpointMeta, Mode, ModelParams};
use crate::multiplex::{assemble_multiplex, homophily_ratio, MultiplexGraph};
use crate::precompute::{
    cache_read, cache_write, fnv1a64_file, precompute_image, CacheEntry, CacheIndex,
    PrecomputedFeatures, Standardization,
};
use crate::rng::{derive_seed, tag_str};
use crate::training::{TrainDataset, TrainGraph};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// A manifest plus every referenced cell table, loaded and validated.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
    pub tables: BTreeMap<String, CellTable>,
}

pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut tables = BTreeMap::new();
    for entry in &manifest.images {
        let path = root.join(&entry.path);
        let table = load_cell_table(&path, &entry.image_id, &manifest.columns)?;
        tables.insert(entry.image_id.clone(), table);
    }
    Ok(LoadedDataset { manifest, root, tables })
}

/// How to obtain cell types when tables are not fully annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypingPolicy {
    /// Fully typed → as-is; nothing typed anywhere → K-Means; partially
    /// typed images → label propagation per image.
    Auto,
    /// Cluster pooled biomarkers regardless of existing annotations.
    Kmeans,
    /// Propagate existing labels over the Voronoi adjacency per image.
    Propagate,
    /// Error out unless everything is annotated.
    Require,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypingOutcome {
    AlreadyTyped,
    Kmeans,
    Propagated,
}

/// Apply the typing policy in place.
pub fn ensure_types(
    dataset: &mut LoadedDataset,
    policy: TypingPolicy,
    kmeans_k: usize,
    seed: u64,
) -> Result<TypingOutcome> {
    let fully_typed = dataset.tables.values().all(|t| t.fully_typed());
    let any_typed = dataset.tables.values().any(|t| t.any_typed());
    let run_kmeans = |dataset: &mut LoadedDataset| -> Result<TypingOutcome> {
        let ids: Vec<String> = dataset.tables.keys().cloned().collect();
        let tables: Vec<CellTable> = ids.iter().map(|id| dataset.tables[id].clone()).collect();
        let typed = kmeans_celltype(&tables, &KmeansOptions::new(kmeans_k, seed))?;
        for (id, t) in ids.into_iter().zip(typed) {
            dataset.tables.insert(id, t);
        }
        Ok(TypingOutcome::Kmeans)
    };
    let run_propagate = |dataset: &mut LoadedDataset| -> Result<TypingOutcome> {
        let ids: Vec<String> = dataset.tables.keys().cloned().collect();
        for id in ids {
            let table = &dataset.tables[&id];
            if table.fully_typed() {
                continue;
            }
            let edges = delaunay_adjacency(&table.positions())?;
            let typed = propagate_labels(table, &edges, 1000, 1e-9)?;
            dataset.tables.insert(id, typed);
        }
        Ok(TypingOutcome::Propagated)
    };
    match policy {
        TypingPolicy::Require => {
            if fully_typed {
                Ok(TypingOutcome::AlreadyTyped)
            } else {
                let (index, _) = first_untyped(dataset);
                Err(Error::UntypedNode { index })
            }
        }
        TypingPolicy::Kmeans => run_kmeans(dataset),
        TypingPolicy::Propagate => run_propagate(dataset),
        TypingPolicy::Auto => {
            if fully_typed {
                Ok(TypingOutcome::AlreadyTyped)
            } else if !any_typed {
                run_kmeans(dataset)
            } else {
                run_propagate(dataset)
            }
        }
    }
}

fn first_untyped(dataset: &LoadedDataset) -> (usize, String) {
    for (id, t) in &dataset.tables {
        if let Some(i) = t.cells.iter().position(|c| c.cell_type.is_none()) {
            return (i, id.clone());
        }
    }
    (0, String::new())
}

/// Delaunay adjacency plus multiplex assembly for one table.
pub fn build_graph(table: &CellTable) -> Result<MultiplexGraph> {
    let edges = delaunay_adjacency(&table.positions())?;
    assemble_multiplex(table, edges)
}

/// Per-column mean/std of node features over the training split (falling
/// back to all images when the manifest has no train groups). Zero-variance
/// columns get std 1 so they pass through centered.
pub fn compute_standardization(dataset: &LoadedDataset) -> Result<Standardization> {
    let mut train_ids: Vec<&str> = dataset
        .manifest
        .images_in(Split::Train)
        .iter()
        .map(|e| e.image_id.as_str())
        .collect();
    if train_ids.is_empty() {
        train_ids = dataset.tables.keys().map(String::as_str).collect();
    }
    let f = dataset
        .tables
        .values()
        .next()
        .map(|t| t.feature_dim())
        .ok_or(Error::EmptyTable)?;
    let mut count = 0usize;
    let mut mean = vec![0.0f64; f];
    for id in &train_ids {
        let m = dataset.tables[*id].feature_matrix();
        for i in 0..m.rows {
            for (a, &v) in mean.iter_mut().zip(m.row(i)) {
                *a += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyTable);
    }
    for a in &mut mean {
        *a /= count as f64;
    }
    let mut var = vec![0.0f64; f];
    for id in &train_ids {
        let m = dataset.tables[*id].feature_matrix();
        for i in 0..m.rows {
            for ((a, &v), &mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardization { mean, std })
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub hops: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub resample_each_epoch: bool,
    pub standardize: bool,
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            hops: 3,
            seed: 0,
            stochastic: true,
            resample_each_epoch: false,
            standardize: true,
            workers: 1,
        }
    }
}

/// Per-image sampling seed: derived from the build seed and the image id so
/// per-image outputs do not depend on build order or worker count.
pub fn image_seed(build_seed: u64, image_id: &str) -> u64 {
    derive_seed(build_seed, tag_str(image_id))
}

/// Precompute features for one (typed) table under the given options.
pub fn features_for_table(
    table: &CellTable,
    opts: &BuildOptions,
    standardize: Option<&Standardization>,
) -> Result<PrecomputedFeatures> {
    let mut graph = build_graph(table)?;
    if let Some(s) = standardize {
        s.apply(&mut graph.features);
    }
    let seed = image_seed(opts.seed, &table.image_id);
    let mut pf = precompute_image(&graph, opts.hops, seed, opts.stochastic)?;
    pf.resample_each_epoch = opts.resample_each_epoch;
    Ok(pf)
}

/// Build `.mewp` caches for every image plus the dataset index. Images are
/// distributed over `workers` threads; each image's output depends only on
/// its own table and seed.
pub fn build_caches(
    dataset: &LoadedDataset,
    cache_dir: &Path,
    opts: &BuildOptions,
) -> Result<CacheIndex> {
    std::fs::create_dir_all(cache_dir)?;
    let standardize =
        if opts.standardize { Some(compute_standardization(dataset)?) } else { None };

    let ids: Vec<&String> = dataset.tables.keys().collect();
    let cursor = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<String, CacheEntry>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let workers = opts.workers.max(1).min(ids.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= ids.len() || failure.lock().unwrap().is_some() {
                    return;
                }
                let id = ids[i];
                let work = (|| -> Result<CacheEntry> {
                    let table = &dataset.tables[id];
                    let pf = features_for_table(table, opts, standardize.as_ref())?;
                    let file = format!("{id}.mewp");
                    let path = cache_dir.join(&file);
                    cache_write(&pf, &path)?;
                    Ok(CacheEntry {
                        path: file,
                        hash: fnv1a64_file(&path)?,
                        n: pf.n,
                        f: pf.f,
                    })
                })();
                match work {
                    Ok(entry) => {
                        results.lock().unwrap().insert(id.to_string(), entry);
                    }
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let index = CacheIndex {
        hops: opts.hops,
        seed: opts.seed,
        stochastic: opts.stochastic,
        resample_each_epoch: opts.resample_each_epoch,
        standardize,
        images: results.into_inner().unwrap(),
    };
    index.save(&cache_dir.join("index.json"))?;
    Ok(index)
}

fn cached_features(index: &CacheIndex, cache_dir: &Path, image_id: &str) -> Result<PrecomputedFeatures> {
    let entry = index
        .images
        .get(image_id)
        .ok_or_else(|| Error::MissingCache { image_id: image_id.to_string() })?;
    cache_read(&cache_dir.join(&entry.path))
}

/// Assemble the in-memory training dataset from caches (train + val splits).
/// Graph structures are attached only when per-epoch resampling needs them.
pub fn load_train_dataset(
    dataset: &LoadedDataset,
    index: &CacheIndex,
    cache_dir: &Path,
) -> Result<TrainDataset> {
    let mut out = TrainDataset {
        tasks: dataset.manifest.tasks.clone(),
        train: Vec::new(),
        val: Vec::new(),
    };
    let standardize = index.standardize.as_ref();
    for entry in &dataset.manifest.images {
        let split = dataset.manifest.split_of(entry);
        if split == Split::Test {
            continue;
        }
        let pf = cached_features(index, cache_dir, &entry.image_id)?;
        let graph = if index.resample_each_epoch && split == Split::Train {
            let mut g = build_graph(&dataset.tables[&entry.image_id])?;
            if let Some(s) = standardize {
                s.apply(&mut g.features);
            }
            Some(g)
        } else {
            None
        };
        let labels = dataset
            .manifest
            .labels
            .get(&entry.image_id)
            .cloned()
            .unwrap_or_default();
        let tg = TrainGraph { image_id: entry.image_id.clone(), pf, labels, graph };
        match split {
            Split::Train => out.train.push(tg),
            Split::Val => out.val.push(tg),
            Split::Test => unreachable!(),
        }
    }
    Ok(out)
}

/// One scored image for the per-image CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub task: String,
    pub score: f64,
    pub label: Option<u8>,
    pub time: Option<f64>,
    pub event: Option<u8>,
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("image_id,task,score,label,time,event\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.image_id,
            r.task,
            r.score,
            r.label.map(|v| v.to_string()).unwrap_or_default(),
            r.time.map(|v| v.to_string()).unwrap_or_default(),
            r.event.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    out
}

/// Features source for evaluation: cached files or on-the-fly recomputation.
pub enum FeatureSource<'a> {
    Cached { index: &'a CacheIndex, cache_dir: &'a Path },
    Recompute { opts: &'a BuildOptions, standardize: Option<&'a Standardization> },
}

/// Evaluate a split: forward every image, compute per-task metrics and mean
/// attention. Returns the report and per-image score rows.
pub fn eval_split(
    dataset: &LoadedDataset,
    source: &FeatureSource,
    params: &ModelParams,
    split: Split,
    split_name: &str,
) -> Result<(EvalReport, Vec<ScoreRow>)> {
    let images = dataset.manifest.images_in(split);
    if images.is_empty() {
        return Err(Error::Manifest { reason: format!("no images in split `{split_name}`") });
    }
    let tasks = &params.dims.tasks;
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut attn_sum = 0.0;
    let mut attn_count = 0usize;
    let mut per_task: Vec<(Vec<f64>, Vec<u8>, Vec<f64>, Vec<u8>)> =
        vec![(Vec::new(), Vec::new(), Vec::new(), Vec::new()); tasks.len()];

    for entry in images {
        let pf = match source {
            FeatureSource::Cached { index, cache_dir } => {
                cached_features(index, cache_dir, &entry.image_id)?
            }
            FeatureSource::Recompute { opts, standardize } => {
                features_for_table(&dataset.tables[&entry.image_id], opts, *standardize)?
            }
        };
        let trace = full_forward(&pf, params, Mode::Eval, None)?;
        if let Some((v, _)) = trace.mean_attention() {
            attn_sum += v;
            attn_count += 1;
        }
        for (t, task) in tasks.iter().enumerate() {
            let score = task_score(&trace.pooled[t], task.kind);
            let label = dataset.manifest.label(&entry.image_id, &task.name);
            let mut row = ScoreRow {
                image_id: entry.image_id.clone(),
                task: task.name.clone(),
                score,
                label: None,
                time: None,
                event: None,
            };
            match (task.kind, label) {
                (TaskKind::Binary, Some(Label::Binary(l))) => {
                    row.label = Some(*l);
                    per_task[t].0.push(score);
                    per_task[t].1.push(*l);
                }
                (TaskKind::Hazard, Some(Label::Hazard { time, event })) => {
                    row.time = Some(*time);
                    row.event = Some(*event);
                    per_task[t].0.push(score);
                    per_task[t].2.push(*time);
                    per_task[t].3.push(*event);
                }
                _ => {}
            }
            rows.push(row);
        }
    }

    let mut reports = BTreeMap::new();
    for (t, task) in tasks.iter().enumerate() {
        let (scores, bins, times, events) = &per_task[t];
        let report = match task.kind {
            TaskKind::Binary => {
                let value = auc_roc(scores, bins)?;
                TaskReport {
                    kind: task.kind,
                    metric: "auc_roc".into(),
                    value,
                    scored_images: scores.len(),
                    positives: Some(bins.iter().filter(|&&l| l == 1).count()),
                    negatives: Some(bins.iter().filter(|&&l| l == 0).count()),
                    comparable_pairs: None,
                    tied_risk_pairs: None,
                    events: None,
                }
            }
            TaskKind::Hazard => {
                let detail = c_index_detailed(scores, times, events)?;
                TaskReport {
                    kind: task.kind,
                    metric: "c_index".into(),
                    value: detail.value,
                    scored_images: scores.len(),
                    positives: None,
                    negatives: None,
                    comparable_pairs: Some(detail.comparable_pairs),
                    tied_risk_pairs: Some(detail.tied_risk_pairs),
                    events: Some(detail.events),
                }
            }
        };
        reports.insert(task.name.clone(), report);
    }

    let attention = (attn_count > 0).then(|| {
        let v = attn_sum / attn_count as f64;
        AttentionReport { voronoi_mean: v, celltype_mean: 1.0 - v }
    });
    let report = EvalReport {
        split: split_name.to_string(),
        images: dataset.manifest.images_in(split).len(),
        tasks: reports,
        attention,
    };
    Ok((report, rows))
}

/// Prediction output for a single image.
#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub image_id: String,
    pub scores: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionReport>,
}

/// Score one typed table with a trained checkpoint. The checkpoint's
/// recorded precompute settings (hops, stochastic flag, standardization) are
/// applied; `seed` drives the edge sampling.
pub fn predict_one(
    table: &CellTable,
    params: &ModelParams,
    meta: &CheckpointMeta,
    seed: u64,
) -> Result<PredictReport> {
    let opts = BuildOptions {
        hops: meta.precompute.hops,
        seed,
        stochastic: meta.precompute.stochastic,
        resample_each_epoch: false,
        standardize: meta.standardize.is_some(),
        workers: 1,
    };
    let pf = features_for_table(table, &opts, meta.standardize.as_ref())?;
    let trace = full_forward(&pf, params, Mode::Eval, None)?;
    let mut scores = BTreeMap::new();
    for (t, task) in params.dims.tasks.iter().enumerate() {
        scores.insert(task.name.clone(), task_score(&trace.pooled[t], task.kind));
    }
    let attention = trace
        .mean_attention()
        .map(|(v, c)| AttentionReport { voronoi_mean: v, celltype_mean: c });
    Ok(PredictReport { image_id: table.image_id.clone(), scores, attention })
}

// ── Diagnostics ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct ImageDiag {
    pub n: usize,
    pub voronoi_edges: usize,
    pub homophily_ratio: f64,
    pub type_histogram: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub images: usize,
    pub total_cells: usize,
    pub mean_homophily: f64,
    pub min_cells: usize,
    pub max_cells: usize,
    /// Homophily counts in 20 equal bins over [0, 1].
    pub homophily_histogram: Vec<usize>,
    pub per_image: BTreeMap<String, ImageDiag>,
}

/// Homophily and size statistics over a typed dataset.
pub fn diagnose(dataset: &LoadedDataset) -> Result<DiagnoseReport> {
    let mut per_image = BTreeMap::new();
    let mut homophily_sum = 0.0;
    let mut hist = vec![0usize; 20];
    let mut total_cells = 0usize;
    let mut min_cells = usize::MAX;
    let mut max_cells = 0usize;
    for (id, table) in &dataset.tables {
        let graph = build_graph(table)?;
        let h = homophily_ratio(&graph.voronoi, &graph.type_codes)?;
        let mut type_histogram: BTreeMap<String, usize> = BTreeMap::new();
        for cell in &table.cells {
            *type_histogram.entry(cell.cell_type.clone().unwrap_or_default()).or_default() += 1;
        }
        homophily_sum += h;
        hist[((h * 20.0) as usize).min(19)] += 1;
        total_cells += table.len();
        min_cells = min_cells.min(table.len());
        max_cells = max_cells.max(table.len());
        per_image.insert(
            id.clone(),
            ImageDiag {
                n: table.len(),
                voronoi_edges: graph.voronoi.edges.len(),
                homophily_ratio: h,
                type_histogram,
            },
        );
    }
    let images = per_image.len();
    Ok(DiagnoseReport {
        images,
        total_cells,
        mean_homophily: homophily_sum / images.max(1) as f64,
        min_cells,
        max_cells,
        homophily_histogram: hist,
        per_image,
    })
}
