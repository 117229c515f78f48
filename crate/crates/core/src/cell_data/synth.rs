//! Synthetic dataset generator.
//!
//! Desk-scale stand-in for segmented multiplexed-imaging exports: each image
//! is a W×W µm square of cells with type-dependent biomarker profiles, a
//! tunable spatial mixing parameter, and labels computed from the realized
//! table (never from the sampling intent), so every label is exactly
//! recomputable from the emitted data.

use super::table::{
    Cell, CellTable, ColumnMapping, DatasetManifest, ImageEntry, Label, Split, TaskKind, TaskSpec,
};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Label / placement mechanism for one synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mechanism {
    /// Binary label: 1 iff the realized fraction of `target_type` exceeds
    /// `threshold`. The generator draws the intended fraction uniformly from
    /// `threshold ± spread`. When `partner_type` is set, the partner absorbs
    /// the remainder of `pair_total`, holding the pair's total fraction
    /// fixed, and shares the target's blob center under partial mixing.
    Composition {
        target_type: usize,
        threshold: f64,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        partner_type: Option<usize>,
        #[serde(default)]
        pair_total: Option<f64>,
    },
    /// Binary label: 1 iff the largest single-linkage cluster (components of
    /// target-type cells linked within `link_distance`) has radius (max
    /// member distance from the component centroid) above `radius_threshold`.
    /// The generator plants either one wide cluster or several tight clumps
    /// with equal probability; the label is computed from what materialized.
    Geometry { target_type: usize, link_distance: f64, radius_threshold: f64 },
    /// Event time is exponential with rate increasing in the realized
    /// target-type fraction; censoring is independent uniform on
    /// `(0, censor_horizon]`.
    Hazard {
        target_type: usize,
        #[serde(default = "default_base_rate")]
        base_rate: f64,
        #[serde(default = "default_rate_slope")]
        rate_slope: f64,
        censor_horizon: f64,
    },
}

fn default_spread() -> f64 {
    0.1
}
fn default_base_rate() -> f64 {
    0.1
}
fn default_rate_slope() -> f64 {
    2.0
}

impl Mechanism {
    fn target_type(&self) -> usize {
        match self {
            Mechanism::Composition { target_type, .. } => *target_type,
            Mechanism::Geometry { target_type, .. } => *target_type,
            Mechanism::Hazard { target_type, .. } => *target_type,
        }
    }

    fn task_kind(&self) -> TaskKind {
        match self {
            Mechanism::Hazard { .. } => TaskKind::Hazard,
            _ => TaskKind::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTask {
    pub name: String,
    pub mechanism: Mechanism,
}

/// Generator configuration; see field comments for semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub images: usize,
    pub cells_min: usize,
    pub cells_max: usize,
    pub num_types: usize,
    pub biomarker_dim: usize,
    /// Per-type biomarker means (num_types × biomarker_dim). Default: a
    /// deterministic spread of axis-aligned directions.
    #[serde(default)]
    pub type_means: Option<Vec<Vec<f64>>>,
    /// Scale for the generated default means.
    #[serde(default = "default_mean_scale")]
    pub type_mean_scale: f64,
    /// Isotropic per-cell biomarker noise.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    /// Per-image batch-effect: one shared shift vector drawn per image with
    /// this standard deviation is added to every cell's biomarkers.
    #[serde(default)]
    pub image_shift_std: f64,
    /// Spatial mixing λ ∈ [0,1]: 0 places each type in its own blob,
    /// 1 scatters uniformly.
    pub mixing: f64,
    /// Image side length in µm.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Blob standard deviation as a fraction of width.
    #[serde(default = "default_blob_sigma_frac")]
    pub blob_sigma_frac: f64,
    /// Base composition across types; default uniform.
    #[serde(default)]
    pub type_fracs: Option<Vec<f64>>,
    /// Log-normal jitter applied to per-image compositions.
    #[serde(default = "default_frac_jitter")]
    pub frac_jitter: f64,
    /// Number of groups (coverslip analog); images are assigned round-robin.
    #[serde(default = "default_groups")]
    pub groups: usize,
    /// Groups per split, train/val/test; must sum to `groups`.
    #[serde(default = "default_split_groups")]
    pub split_groups: (usize, usize, usize),
    #[serde(default = "default_size_mean")]
    pub size_mean: f64,
    /// Coefficient of variation of the log-normal cell size.
    #[serde(default = "default_size_cv")]
    pub size_cv: f64,
    pub tasks: Vec<SynthTask>,
}

fn default_mean_scale() -> f64 {
    2.0
}
fn default_noise_std() -> f64 {
    1.0
}
fn default_width() -> f64 {
    1000.0
}
fn default_blob_sigma_frac() -> f64 {
    0.12
}
fn default_frac_jitter() -> f64 {
    0.3
}
fn default_groups() -> usize {
    7
}
fn default_split_groups() -> (usize, usize, usize) {
    (4, 1, 2)
}
fn default_size_mean() -> f64 {
    50.0
}
fn default_size_cv() -> f64 {
    0.3
}

impl SynthConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SynthConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidConfig { reason });
        if self.images == 0 {
            return fail("images must be >= 1".into());
        }
        if self.cells_min < 3 || self.cells_min > self.cells_max {
            return fail("cells range must satisfy 3 <= cells_min <= cells_max".into());
        }
        if self.num_types == 0 || self.biomarker_dim == 0 {
            return fail("num_types and biomarker_dim must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mixing) {
            return fail(format!("mixing must be in [0,1], got {}", self.mixing));
        }
        if self.width <= 0.0 || self.noise_std < 0.0 || self.size_mean <= 0.0 {
            return fail("width and size_mean must be positive, noise_std nonnegative".into());
        }
        if self.image_shift_std < 0.0 {
            return fail("image_shift_std must be nonnegative".into());
        }
        if let Some(means) = &self.type_means {
            if means.len() != self.num_types
                || means.iter().any(|m| m.len() != self.biomarker_dim)
            {
                return fail("type_means must be num_types × biomarker_dim".into());
            }
        }
        if let Some(fr) = &self.type_fracs {
            if fr.len() != self.num_types || fr.iter().any(|&f| f <= 0.0) {
                return fail("type_fracs must list a positive weight per type".into());
            }
        }
        let (tr, va, te) = self.split_groups;
        if tr + va + te != self.groups || self.groups == 0 {
            return fail("split_groups must sum to groups".into());
        }
        if self.tasks.is_empty() {
            return fail("at least one task is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(&t.name) {
                return fail(format!("duplicate task name `{}`", t.name));
            }
            if t.mechanism.target_type() >= self.num_types {
                return fail(format!("task `{}` targets a type out of range", t.name));
            }
            match &t.mechanism {
                Mechanism::Composition { threshold, spread, partner_type, pair_total, target_type } => {
                    if !(0.0 < *threshold && *threshold < 1.0) {
                        return fail(format!(
                            "task `{}` threshold must be in (0,1), got {threshold}",
                            t.name
                        ));
                    }
                    if *spread < 0.0 || threshold - spread <= 0.0 || threshold + spread >= 1.0 {
                        return fail(format!("task `{}` spread leaves (0,1)", t.name));
                    }
                    if let Some(p) = partner_type {
                        if *p >= self.num_types || p == target_type {
                            return fail(format!("task `{}` partner type invalid", t.name));
                        }
                        let total = pair_total.unwrap_or(0.0);
                        if total <= threshold + spread || total >= 1.0 {
                            return fail(format!(
                                "task `{}` pair_total must sit in (threshold+spread, 1)",
                                t.name
                            ));
                        }
                    }
                }
                Mechanism::Geometry { link_distance, radius_threshold, .. } => {
                    if *link_distance <= 0.0 || *radius_threshold <= 0.0 {
                        return fail(format!("task `{}` distances must be positive", t.name));
                    }
                }
                Mechanism::Hazard { base_rate, censor_horizon, .. } => {
                    if *base_rate <= 0.0 || *censor_horizon <= 0.0 {
                        return fail(format!(
                            "task `{}` base_rate and censor_horizon must be positive",
                            t.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn resolved_type_means(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.type_means {
            return m.clone();
        }
        let fb = self.biomarker_dim;
        (0..self.num_types)
            .map(|t| {
                let mut mu = vec![0.0; fb];
                let axis = t % fb;
                let sign = if t / fb % 2 == 0 { 1.0 } else { -1.0 };
                mu[axis] += sign * self.type_mean_scale;
                mu[(axis + 1) % fb] += sign * 0.25 * self.type_mean_scale;
                mu
            })
            .collect()
    }

    fn task_specs(&self) -> Vec<TaskSpec> {
        self.tasks
            .iter()
            .map(|t| TaskSpec { name: t.name.clone(), kind: t.mechanism.task_kind() })
            .collect()
    }
}

/// Largest single-linkage cluster radius among `points` linked within
/// `link_distance`; radius is the max distance from a component centroid to
/// its members. Returns 0 for empty input.
pub fn largest_cluster_radius(points: &[(f64, f64)], link_distance: f64) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let link2 = link_distance * link_distance;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            if dx * dx + dy * dy <= link2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        members.entry(r).or_default().push(i);
    }
    let mut best: f64 = 0.0;
    for group in members.values() {
        let m = group.len() as f64;
        let cx = group.iter().map(|&i| points[i].0).sum::<f64>() / m;
        let cy = group.iter().map(|&i| points[i].1).sum::<f64>() / m;
        let radius = group
            .iter()
            .map(|&i| {
                let dx = points[i].0 - cx;
                let dy = points[i].1 - cy;
                (dx * dx + dy * dy).sqrt()
            })
            .fold(0.0, f64::max);
        best = best.max(radius);
    }
    best
}

fn clamp_to_box(v: f64, width: f64) -> f64 {
    v.clamp(0.0, width)
}

struct ImagePlan {
    type_of_cell: Vec<usize>,
    positions: Vec<(f64, f64)>,
}

fn draw_fractions(cfg: &SynthConfig, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let t = cfg.num_types;
    let base: Vec<f64> =
        cfg.type_fracs.clone().unwrap_or_else(|| vec![1.0 / t as f64; t]);
    let total: f64 = base.iter().sum();
    let mut fracs: Vec<f64> =
        base.iter().map(|b| b / total * (cfg.frac_jitter * rng::normal(rng)).exp()).collect();

    // The first composition task pins its target (and optional partner).
    let comp = cfg.tasks.iter().find_map(|t| match &t.mechanism {
        m @ Mechanism::Composition { .. } => Some(m.clone()),
        _ => None,
    });
    if let Some(Mechanism::Composition { target_type, threshold, spread, partner_type, pair_total }) =
        comp
    {
        let f_target = threshold - spread + 2.0 * spread * rng.random::<f64>();
        let mut reserved = f_target;
        let mut pinned = vec![(target_type, f_target)];
        if let Some(p) = partner_type {
            let total_pair = pair_total.unwrap_or(2.0 * threshold);
            let f_partner = (total_pair - f_target).max(0.01);
            reserved += f_partner;
            pinned.push((p, f_partner));
        }
        let rest: f64 = fracs
            .iter()
            .enumerate()
            .filter(|(i, _)| !pinned.iter().any(|(p, _)| p == i))
            .map(|(_, f)| *f)
            .sum();
        let scale = (1.0 - reserved).max(0.01) / rest.max(1e-12);
        for (i, f) in fracs.iter_mut().enumerate() {
            if let Some((_, pf)) = pinned.iter().find(|(p, _)| *p == i) {
                *f = *pf;
            } else {
                *f *= scale;
            }
        }
    } else {
        let s: f64 = fracs.iter().sum();
        for f in &mut fracs {
            *f /= s;
        }
    }
    fracs
}

fn plan_image(cfg: &SynthConfig, n_cells: usize, rng: &mut ChaCha12Rng) -> ImagePlan {
    let t = cfg.num_types;
    let w = cfg.width;
    let fracs = draw_fractions(cfg, rng);

    // cumulative draw per cell; realized counts are whatever materializes
    let mut cum = vec![0.0; t];
    let mut acc = 0.0;
    for (i, f) in fracs.iter().enumerate() {
        acc += f;
        cum[i] = acc;
    }
    let type_of_cell: Vec<usize> = (0..n_cells)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cum.iter().position(|&c| u <= c).unwrap_or(t - 1)
        })
        .collect();

    // blob centers for the λ placement scheme
    let sigma = cfg.blob_sigma_frac * w;
    let margin = (2.0 * sigma).min(w / 4.0);
    let mut centers: Vec<(f64, f64)> = (0..t)
        .map(|_| {
            (
                margin + rng.random::<f64>() * (w - 2.0 * margin),
                margin + rng.random::<f64>() * (w - 2.0 * margin),
            )
        })
        .collect();
    if let Some(Mechanism::Composition { target_type, partner_type: Some(p), .. }) = cfg
        .tasks
        .iter()
        .find_map(|t| match &t.mechanism {
            m @ Mechanism::Composition { partner_type: Some(_), .. } => Some(m.clone()),
            _ => None,
        })
    {
        centers[p] = centers[target_type];
    }

    // geometry task overrides placement for its target type
    let geom = cfg.tasks.iter().find_map(|t| match &t.mechanism {
        m @ Mechanism::Geometry { .. } => Some(m.clone()),
        _ => None,
    });
    let mut positions = vec![(0.0, 0.0); n_cells];
    let mut geom_positions: Vec<(f64, f64)> = Vec::new();
    if let Some(Mechanism::Geometry { target_type, link_distance, radius_threshold }) = &geom {
        let m_t = type_of_cell.iter().filter(|&&ty| ty == *target_type).count();
        let planted_big = rng.random::<f64>() < 0.5;
        if planted_big {
            // one wide disk; radius comfortably above threshold
            let r_big = radius_threshold * 1.8;
            let cx = r_big + rng.random::<f64>() * (w - 2.0 * r_big).max(1.0);
            let cy = r_big + rng.random::<f64>() * (w - 2.0 * r_big).max(1.0);
            for _ in 0..m_t {
                let ang = rng.random::<f64>() * std::f64::consts::TAU;
                let rad = r_big * rng.random::<f64>().sqrt();
                geom_positions
                    .push((clamp_to_box(cx + rad * ang.cos(), w), clamp_to_box(cy + rad * ang.sin(), w)));
            }
        } else {
            // several tight clumps, centers separated enough not to merge
            let clumps = 3 + (rng.random::<f64>() * 3.0) as usize;
            let r_small = radius_threshold * 0.45;
            let sep = 2.0 * r_small + 2.5 * link_distance;
            let mut ccs: Vec<(f64, f64)> = Vec::new();
            let mut attempts = 0;
            while ccs.len() < clumps && attempts < 1000 {
                attempts += 1;
                let c = (
                    r_small + rng.random::<f64>() * (w - 2.0 * r_small).max(1.0),
                    r_small + rng.random::<f64>() * (w - 2.0 * r_small).max(1.0),
                );
                let far_enough = ccs
                    .iter()
                    .all(|&o| ((c.0 - o.0).powi(2) + (c.1 - o.1).powi(2)).sqrt() >= sep);
                if far_enough {
                    ccs.push(c);
                }
            }
            for idx in 0..m_t {
                let c = ccs[idx % ccs.len().max(1)];
                let ang = rng.random::<f64>() * std::f64::consts::TAU;
                let rad = r_small * rng.random::<f64>().sqrt();
                geom_positions
                    .push((clamp_to_box(c.0 + rad * ang.cos(), w), clamp_to_box(c.1 + rad * ang.sin(), w)));
            }
        }
    }

    let mut geom_cursor = 0;
    for (i, &ty) in type_of_cell.iter().enumerate() {
        let is_geom_target = matches!(&geom, Some(Mechanism::Geometry { target_type, .. }) if *target_type == ty);
        if is_geom_target {
            positions[i] = geom_positions[geom_cursor];
            geom_cursor += 1;
        } else if rng.random::<f64>() < cfg.mixing {
            positions[i] = (rng.random::<f64>() * w, rng.random::<f64>() * w);
        } else {
            let c = centers[ty];
            positions[i] = (
                clamp_to_box(c.0 + sigma * rng::normal(rng), w),
                clamp_to_box(c.1 + sigma * rng::normal(rng), w),
            );
        }
    }
    ImagePlan { type_of_cell, positions }
}

fn label_for(
    mechanism: &Mechanism,
    table: &CellTable,
    rng: &mut ChaCha12Rng,
) -> Label {
    let type_name = |t: usize| format!("t{t}");
    match mechanism {
        Mechanism::Composition { target_type, threshold, .. } => {
            let name = type_name(*target_type);
            let count =
                table.cells.iter().filter(|c| c.cell_type.as_deref() == Some(&name)).count();
            let frac = count as f64 / table.len() as f64;
            Label::Binary(u8::from(frac > *threshold))
        }
        Mechanism::Geometry { target_type, link_distance, radius_threshold } => {
            let name = type_name(*target_type);
            let pts: Vec<(f64, f64)> = table
                .cells
                .iter()
                .filter(|c| c.cell_type.as_deref() == Some(&name))
                .map(|c| (c.x, c.y))
                .collect();
            let radius = largest_cluster_radius(&pts, *link_distance);
            Label::Binary(u8::from(radius > *radius_threshold))
        }
        Mechanism::Hazard { target_type, base_rate, rate_slope, censor_horizon } => {
            let name = type_name(*target_type);
            let count =
                table.cells.iter().filter(|c| c.cell_type.as_deref() == Some(&name)).count();
            let frac = count as f64 / table.len() as f64;
            let rate = base_rate * (rate_slope * (frac - 0.5)).exp();
            let event_time = rng::exponential(rng, rate);
            let censor_time = (rng.random::<f64>() * censor_horizon).max(1e-9);
            if event_time <= censor_time {
                Label::Hazard { time: event_time.max(1e-9), event: 1 }
            } else {
                Label::Hazard { time: censor_time, event: 0 }
            }
        }
    }
}

/// Generate `config.images` tables plus a manifest. Deterministic for a
/// fixed `(config, seed)` pair.
pub fn generate_synthetic(
    config: &SynthConfig,
    seed: u64,
) -> Result<(Vec<CellTable>, DatasetManifest)> {
    config.validate()?;
    let means = config.resolved_type_means();
    let mut tables = Vec::with_capacity(config.images);
    let mut images = Vec::with_capacity(config.images);
    let mut labels: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();

    for i in 0..config.images {
        let mut rng = rng::stream(seed, derive_seed(0x5EED_1A6E, i as u64));
        let span = config.cells_max - config.cells_min;
        let n_cells = config.cells_min + if span > 0 { rng.random_range(0..=span) } else { 0 };
        let plan = plan_image(config, n_cells, &mut rng);

        let image_shift: Vec<f64> = (0..config.biomarker_dim)
            .map(|_| config.image_shift_std * rng::normal(&mut rng))
            .collect();
        let mut cells = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let ty = plan.type_of_cell[c];
            let mu = &means[ty];
            let biomarkers: Vec<f64> = mu
                .iter()
                .zip(&image_shift)
                .map(|(&m, &sh)| m + sh + config.noise_std * rng::normal(&mut rng))
                .collect();
            let size = config.size_mean
                * (config.size_cv * rng::normal(&mut rng) - 0.5 * config.size_cv * config.size_cv)
                    .exp();
            cells.push(Cell {
                cell_id: c as u64,
                x: plan.positions[c].0,
                y: plan.positions[c].1,
                size,
                biomarkers,
                cell_type: Some(format!("t{ty}")),
            });
        }
        let image_id = format!("img_{i:04}");
        let table = CellTable {
            image_id: image_id.clone(),
            biomarker_names: (0..config.biomarker_dim).map(|d| format!("b{d}")).collect(),
            cells,
        };

        let mut by_task = BTreeMap::new();
        for task in &config.tasks {
            let tag = derive_seed(rng::tag_str(&task.name), i as u64);
            let mut label_rng = rng::stream(seed, derive_seed(0x1A8E_15, tag));
            by_task.insert(task.name.clone(), label_for(&task.mechanism, &table, &mut label_rng));
        }
        labels.insert(image_id.clone(), by_task);

        images.push(ImageEntry {
            image_id: image_id.clone(),
            path: format!("cells/{image_id}.csv"),
            group_id: format!("g{}", i % config.groups),
        });
        tables.push(table);
    }

    let (tr, va, _te) = config.split_groups;
    let mut splits = BTreeMap::new();
    for g in 0..config.groups {
        let split = if g < tr {
            Split::Train
        } else if g < tr + va {
            Split::Val
        } else {
            Split::Test
        };
        splits.insert(format!("g{g}"), split);
    }

    let manifest = DatasetManifest {
        images,
        splits,
        tasks: config.task_specs(),
        labels,
        columns: ColumnMapping::default(),
    };
    manifest.validate()?;
    Ok((tables, manifest))
}
