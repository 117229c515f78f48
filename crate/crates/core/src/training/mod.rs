//! Losses, exact gradients, Adam, and the training loop with
//! best-validation checkpoint selection.

mod adam;
mod backward;
mod loss;

pub use adam::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use backward::backward;
pub use loss::{ce_loss, cox_loss, multitask_loss};

use crate::cell_data::{Label, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{auc_roc, c_index, task_score};
use crate::model::{
    full_forward, Activation, Mode, ModelDims, ModelParams, Pooling, TaskHead, Variant,
};
use crate::multiplex::MultiplexGraph;
use crate::precompute::{resample_celltype_hops, PrecomputedFeatures};
use crate::rng::{self, derive_seed};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Training hyperparameters. The JSON config file carries exactly these keys
/// (all optional, with the defaults below).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_hops")]
    pub hops: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_shared")]
    pub shared_weights: bool,
    #[serde(default)]
    pub seed: u64,
    /// Per-task loss weights; unlisted tasks weigh 1.
    #[serde(default)]
    pub task_weights: BTreeMap<String, f64>,
    /// Validation metric for checkpoint selection: "mean" or a task name.
    #[serde(default = "default_selection")]
    pub selection_metric: String,
}

fn default_lr() -> f64 {
    0.001
}
fn default_epochs() -> usize {
    1000
}
fn default_batch() -> usize {
    32
}
fn default_hidden() -> usize {
    512
}
fn default_hops() -> usize {
    3
}
fn default_shared() -> bool {
    true
}
fn default_selection() -> String {
    "mean".into()
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidConfig { reason });
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        if self.hops == 0 {
            return fail("hops must be >= 1".into());
        }
        if self.learning_rate <= 0.0 {
            return fail("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return fail("batch_size and hidden_dim must be >= 1".into());
        }
        Ok(())
    }
}

/// Architecture switches that are not part of the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub variant: Variant,
    pub activation: Activation,
    pub pooling: Pooling,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            variant: Variant::Attention,
            activation: Activation::Relu,
            pooling: Pooling::Mean,
        }
    }
}

/// One graph ready for training: precomputed features plus labels. The
/// multiplex graph itself is only needed when the cache was built with
/// per-epoch resampling.
#[derive(Debug, Clone)]
pub struct TrainGraph {
    pub image_id: String,
    pub pf: PrecomputedFeatures,
    pub labels: BTreeMap<String, Label>,
    pub graph: Option<MultiplexGraph>,
}

#[derive(Debug, Clone)]
pub struct TrainDataset {
    pub tasks: Vec<TaskSpec>,
    pub train: Vec<TrainGraph>,
    pub val: Vec<TrainGraph>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    /// Per-task validation metric, aligned with `History::tasks`; None when
    /// the metric was undefined for that epoch (single class, no pairs).
    pub val: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub tasks: Vec<String>,
    pub rows: Vec<EpochRow>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss");
        for t in &self.tasks {
            out.push_str(&format!(",val_{t}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.epoch, row.train_loss));
            for v in &row.val {
                match v {
                    Some(x) => out.push_str(&format!(",{x}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub history: History,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub selection_metric: String,
}

fn label_binary(labels: &BTreeMap<String, Label>, task: &str) -> Option<u8> {
    match labels.get(task) {
        Some(Label::Binary(v)) => Some(*v),
        _ => None,
    }
}

fn label_hazard(labels: &BTreeMap<String, Label>, task: &str) -> Option<(f64, u8)> {
    match labels.get(task) {
        Some(Label::Hazard { time, event }) => Some((*time, *event)),
        _ => None,
    }
}

/// Per-task validation metrics over a set of graphs with a fixed parameter
/// vector. Undefined metrics come back as None.
pub fn validation_metrics(
    graphs: &[TrainGraph],
    params: &ModelParams,
    tasks: &[TaskSpec],
) -> Result<Vec<Option<f64>>> {
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); tasks.len()];
    let mut bin_labels: Vec<Vec<u8>> = vec![Vec::new(); tasks.len()];
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); tasks.len()];
    let mut events: Vec<Vec<u8>> = vec![Vec::new(); tasks.len()];
    for g in graphs {
        let trace = full_forward(&g.pf, params, Mode::Eval, None)?;
        for (t, task) in tasks.iter().enumerate() {
            match task.kind {
                TaskKind::Binary => {
                    if let Some(l) = label_binary(&g.labels, &task.name) {
                        scores[t].push(task_score(&trace.pooled[t], TaskKind::Binary));
                        bin_labels[t].push(l);
                    }
                }
                TaskKind::Hazard => {
                    if let Some((time, event)) = label_hazard(&g.labels, &task.name) {
                        scores[t].push(task_score(&trace.pooled[t], TaskKind::Hazard));
                        times[t].push(time);
                        events[t].push(event);
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let value = match task.kind {
            TaskKind::Binary => auc_roc(&scores[t], &bin_labels[t]).ok(),
            TaskKind::Hazard => c_index(&scores[t], &times[t], &events[t]).ok(),
        };
        out.push(value);
    }
    Ok(out)
}

fn selection_value(metric: &str, tasks: &[TaskSpec], vals: &[Option<f64>]) -> Option<f64> {
    if metric == "mean" {
        let defined: Vec<f64> = vals.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    } else {
        tasks.iter().position(|t| t.name == metric).and_then(|i| vals[i])
    }
}

/// Train on precomputed graphs with graph-level mini-batching.
///
/// Each epoch: seeded shuffle, forward/loss/backward/Adam per batch, then a
/// full validation pass. Binary tasks use mean cross-entropy over the
/// batch's labeled graphs; hazard tasks use the negative Cox partial
/// likelihood with risk sets inside the batch (skipped with a warning when
/// the batch has no usable event structure). Returns the parameters of the
/// best validation epoch.
pub fn train(
    data: &mut TrainDataset,
    config: &TrainConfig,
    options: &ModelOptions,
) -> Result<TrainOutput> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::InvalidConfig { reason: "no training graphs".into() });
    }
    if data.tasks.is_empty() {
        return Err(Error::InvalidConfig { reason: "no tasks declared".into() });
    }
    let f = data.train[0].pf.f;
    for g in data.train.iter().chain(&data.val) {
        if g.pf.k != config.hops {
            return Err(Error::DimMismatch {
                expected: format!("caches built with K={}", config.hops),
                got: format!("image `{}` has K={}", g.image_id, g.pf.k),
            });
        }
        if g.pf.f != f {
            return Err(Error::DimMismatch {
                expected: format!("feature dim {f}"),
                got: format!("image `{}` has F={}", g.image_id, g.pf.f),
            });
        }
    }
    // only training graphs are re-sampled; validation features stay fixed
    for g in &data.train {
        if g.pf.resample_each_epoch && g.graph.is_none() {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "cache for `{}` requests per-epoch resampling but no graph was supplied",
                    g.image_id
                ),
            });
        }
    }

    let tasks: Vec<TaskHead> =
        data.tasks.iter().map(|t| TaskHead { name: t.name.clone(), kind: t.kind }).collect();
    let weights: Vec<f64> = data
        .tasks
        .iter()
        .map(|t| config.task_weights.get(&t.name).copied().unwrap_or(1.0))
        .collect();
    let dims = ModelDims {
        f,
        d: config.hidden_dim,
        k: config.hops,
        shared: config.shared_weights,
        variant: options.variant,
        activation: options.activation,
        pooling: options.pooling,
        dropout: config.dropout,
        tasks,
    };
    let mut params = ModelParams::init(dims, derive_seed(config.seed, 0x1217))?;
    let mut state = OptimizerState::new(params.values.len());

    let n_tasks = data.tasks.len();
    let mut history =
        History { tasks: data.tasks.iter().map(|t| t.name.clone()).collect(), rows: Vec::new() };
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut fallback_best: Option<(usize, f64, ModelParams)> = None;
    let mut warned_hazard_skip = false;
    let resample = data.train.iter().any(|g| g.pf.resample_each_epoch);

    for epoch in 1..=config.epochs {
        if resample && epoch > 1 {
            for g in data.train.iter_mut() {
                if g.pf.resample_each_epoch {
                    let graph = g.graph.as_ref().unwrap();
                    resample_celltype_hops(&mut g.pf, graph, epoch as u64)?;
                }
            }
        }

        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut shuffle_rng = rng::stream(config.seed, derive_seed(0x5bff1e, epoch as u64));
        rng::shuffle(&mut order, &mut shuffle_rng);
        let mut dropout_rng = rng::stream(config.seed, derive_seed(0xd40, epoch as u64));

        let mut epoch_loss = 0.0;
        let mut counted_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let traces: Vec<_> = batch
                .iter()
                .map(|&g| {
                    full_forward(&data.train[g].pf, &params, Mode::Train, Some(&mut dropout_rng))
                })
                .collect::<Result<_>>()?;

            // per-graph, per-task pooled gradients
            let mut d_pooled: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n_tasks]; batch.len()];
            let mut task_losses = Vec::new();
            let mut task_loss_weights = Vec::new();
            for (t, task) in data.tasks.iter().enumerate() {
                match task.kind {
                    TaskKind::Binary => {
                        let valid: Vec<(usize, u8)> = batch
                            .iter()
                            .enumerate()
                            .filter_map(|(bi, &g)| {
                                label_binary(&data.train[g].labels, &task.name).map(|l| (bi, l))
                            })
                            .collect();
                        if valid.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / valid.len() as f64;
                        let mut loss = 0.0;
                        for &(bi, label) in &valid {
                            let (l, mut grad) = ce_loss(&traces[bi].pooled[t], label);
                            loss += l * inv;
                            for g in &mut grad {
                                *g *= inv * weights[t];
                            }
                            d_pooled[bi][t] = Some(grad);
                        }
                        task_losses.push(loss);
                        task_loss_weights.push(weights[t]);
                    }
                    TaskKind::Hazard => {
                        let valid: Vec<(usize, f64, u8)> = batch
                            .iter()
                            .enumerate()
                            .filter_map(|(bi, &g)| {
                                label_hazard(&data.train[g].labels, &task.name)
                                    .map(|(time, event)| (bi, time, event))
                            })
                            .collect();
                        if valid.len() < 2 {
                            continue;
                        }
                        let risks: Vec<f64> =
                            valid.iter().map(|&(bi, _, _)| traces[bi].pooled[t][0]).collect();
                        let times: Vec<f64> = valid.iter().map(|&(_, tm, _)| tm).collect();
                        let events: Vec<u8> = valid.iter().map(|&(_, _, e)| e).collect();
                        match cox_loss(&risks, &times, &events) {
                            Ok((loss, grads)) => {
                                for (k, &(bi, _, _)) in valid.iter().enumerate() {
                                    d_pooled[bi][t] = Some(vec![grads[k] * weights[t]]);
                                }
                                task_losses.push(loss);
                                task_loss_weights.push(weights[t]);
                            }
                            Err(Error::NoEvents) => {
                                if !warned_hazard_skip {
                                    eprintln!(
                                        "warning: task `{}`: batch with no observed events; \
                                         skipping its loss contribution",
                                        task.name
                                    );
                                    warned_hazard_skip = true;
                                }
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }

            let Ok(batch_loss) = multitask_loss(&task_losses, &task_loss_weights) else {
                continue; // no usable labels in this batch
            };

            let mut grad = vec![0.0f64; params.values.len()];
            for (bi, &g) in batch.iter().enumerate() {
                if d_pooled[bi].iter().all(Option::is_none) {
                    continue;
                }
                let gg = backward(&data.train[g].pf, &params, &traces[bi], &d_pooled[bi])?;
                for (a, b) in grad.iter_mut().zip(gg) {
                    *a += b;
                }
            }
            adam_step(&mut params, &grad, &mut state, config.learning_rate);
            epoch_loss += batch_loss;
            counted_batches += 1;
        }
        if counted_batches == 0 {
            return Err(Error::NoValidLabels);
        }
        let train_loss = epoch_loss / counted_batches as f64;

        let vals = if data.val.is_empty() {
            vec![None; n_tasks]
        } else {
            validation_metrics(&data.val, &params, &data.tasks)?
        };
        if let Some(v) = selection_value(&config.selection_metric, &data.tasks, &vals) {
            if best.as_ref().is_none_or(|(_, b, _)| v > *b) {
                best = Some((epoch, v, params.clone()));
            }
        }
        if fallback_best.as_ref().is_none_or(|(_, l, _)| train_loss < *l) {
            fallback_best = Some((epoch, train_loss, params.clone()));
        }
        history.rows.push(EpochRow { epoch, train_loss, val: vals });
    }

    let (best_epoch, best_metric, best_params) = match best {
        Some(b) => b,
        // no usable validation metric anywhere: fall back to train loss
        None => {
            let (e, _, p) = fallback_best.unwrap();
            (e, f64::NAN, p)
        }
    };
    Ok(TrainOutput {
        params: best_params,
        history,
        best_epoch,
        best_metric,
        selection_metric: config.selection_metric.clone(),
    })
}
