//! Two-branch model: per-hop linear transforms, combiners, branch fusion,
//! and per-task MLP heads over precomputed hop matrices.

mod checkpoint;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, PrecomputeMeta, SelectionMeta};
pub use params::{
    Activation, ModelDims, ModelParams, ParamLayout, Pooling, Segment, TaskHead, Variant,
};

use crate::dense::{add_row_bias, matmul_acc_raw, Dense};
use crate::error::{Error, Result};
use crate::precompute::PrecomputedFeatures;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Negative slope of the attention-score LeakyReLU.
pub const ATTENTION_LEAKY_SLOPE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-branch intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BranchTrace {
    /// Pre-σ per-hop blocks, each n×D.
    pub pre_hops: Vec<Dense>,
    /// Combiner input: post-σ, post-dropout concatenation, n×(K+1)D.
    pub h_dropped: Dense,
    /// Dropout scale factors for H (empty when dropout is off).
    pub h_mask: Vec<f64>,
    /// Pre-ξ combiner output, n×D.
    pub z_pre: Dense,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub a1_pre: Dense,
    pub a1_dropped: Dense,
    pub mask1: Vec<f64>,
    pub a2_pre: Dense,
    pub a2_dropped: Dense,
    pub mask2: Vec<f64>,
}

/// Train-mode extras for exact gradients.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub voronoi: Option<BranchTrace>,
    pub celltype: Option<BranchTrace>,
    /// Pre-LeakyReLU attention scores (aᵀz, aᵀz′) per node.
    pub attn_scores: Option<(Vec<f64>, Vec<f64>)>,
    pub heads: Vec<HeadTrace>,
}

/// Forward results. `pooled[t]` is the graph-level output of task t.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub z_voronoi: Option<Dense>,
    pub z_celltype: Option<Dense>,
    /// Voronoi-side attention weight per node (cell-type side is 1 − α).
    pub alpha: Option<Vec<f64>>,
    pub fused: Dense,
    pub node_logits: Vec<Dense>,
    pub pooled: Vec<Vec<f64>>,
    /// Argmax rows per task column under max pooling.
    pub pool_argmax: Vec<Option<Vec<usize>>>,
    pub train: Option<TrainTrace>,
}

impl ForwardTrace {
    /// Mean attention weight over nodes, (voronoi, celltype).
    pub fn mean_attention(&self) -> Option<(f64, f64)> {
        self.alpha.as_ref().map(|a| {
            let v = a.iter().sum::<f64>() / a.len() as f64;
            (v, 1.0 - v)
        })
    }
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn apply_activation(m: &mut Dense, slope: f64) {
    for v in &mut m.data {
        *v = leaky(*v, slope);
    }
}

fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale }).collect()
}

fn activation_slope(params: &ModelParams) -> f64 {
    match params.dims.activation {
        Activation::Relu => 0.0,
        Activation::PRelu => params.prelu_slope(),
        Activation::Identity => 1.0,
    }
}

fn branch_forward_traced(
    hops: &[Dense],
    params: &ModelParams,
    voronoi_branch: bool,
    mode: Mode,
    rng: &mut Option<&mut ChaCha12Rng>,
) -> Result<(BranchTrace, Dense)> {
    let dims = &params.dims;
    let (n, d, k) = (hops[0].rows, dims.d, dims.k);
    if hops.len() != k + 1 {
        return Err(Error::DimMismatch {
            expected: format!("{} hop matrices", k + 1),
            got: format!("{}", hops.len()),
        });
    }
    if hops[0].cols != dims.f {
        return Err(Error::DimMismatch {
            expected: format!("feature dim {}", dims.f),
            got: format!("{}", hops[0].cols),
        });
    }
    let slope = activation_slope(params);

    let mut pre_hops = Vec::with_capacity(k + 1);
    let mut h = Dense::zeros(n, (k + 1) * d);
    for hop in 0..=k {
        let w = params.seg(&params.hop_weight_name(voronoi_branch, hop));
        let b = params.seg(&params.hop_bias_name(voronoi_branch, hop));
        let mut pre = Dense::zeros(n, d);
        matmul_acc_raw(&hops[hop].data, n, dims.f, w, d, &mut pre.data);
        add_row_bias(&mut pre, b);
        // write σ(pre) into the hop's block of H
        for i in 0..n {
            let src = pre.row(i);
            let dst = &mut h.data[i * (k + 1) * d + hop * d..i * (k + 1) * d + (hop + 1) * d];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = leaky(v, slope);
            }
        }
        pre_hops.push(pre);
    }

    let mut h_mask = Vec::new();
    if mode == Mode::Train && dims.dropout > 0.0 {
        let rng = rng.as_mut().expect("train-mode forward with dropout needs an rng");
        h_mask = dropout_mask(h.data.len(), dims.dropout, rng);
        for (v, &m) in h.data.iter_mut().zip(&h_mask) {
            *v *= m;
        }
    }

    let wz_name = if voronoi_branch { "wz_v" } else { "wz_c" };
    let bz_name = if voronoi_branch { "bz_v" } else { "bz_c" };
    let mut z_pre = Dense::zeros(n, d);
    matmul_acc_raw(&h.data, n, (k + 1) * d, params.seg(wz_name), d, &mut z_pre.data);
    add_row_bias(&mut z_pre, params.seg(bz_name));
    let mut z = z_pre.clone();
    apply_activation(&mut z, slope);

    Ok((BranchTrace { pre_hops, h_dropped: h, h_mask, z_pre }, z))
}

/// One branch of the model: per-hop transforms σ([X·W0, ÂX·W1, ...]) and the
/// combiner Z = ξ(H·Wz). Returns (H, Z) where H is the concatenated
/// (post-dropout in train mode) embedding.
pub fn branch_forward(
    hops: &[Dense],
    params: &ModelParams,
    voronoi_branch: bool,
    mode: Mode,
    mut rng: Option<&mut ChaCha12Rng>,
) -> Result<(Dense, Dense)> {
    let (trace, z) = branch_forward_traced(hops, params, voronoi_branch, mode, &mut rng)?;
    Ok((trace.h_dropped, z))
}

/// Two-way attention over branch embeddings.
///
/// Scores are LeakyReLU(aᵀz) with slope 0.3; the per-node weights are the
/// two-way softmax of the scores; the fused embedding is their convex
/// combination. Returns (fused, α_voronoi).
pub fn attention_fuse(z_v: &Dense, z_c: &Dense, a: &[f64]) -> (Dense, Vec<f64>) {
    let (fused, alpha, _) = attention_fuse_traced(z_v, z_c, a);
    (fused, alpha)
}

fn attention_fuse_traced(
    z_v: &Dense,
    z_c: &Dense,
    a: &[f64],
) -> (Dense, Vec<f64>, (Vec<f64>, Vec<f64>)) {
    assert_eq!(z_v.rows, z_c.rows);
    assert_eq!(z_v.cols, z_c.cols);
    let n = z_v.rows;
    let mut fused = Dense::zeros(n, z_v.cols);
    let mut alpha = Vec::with_capacity(n);
    let mut u_v = Vec::with_capacity(n);
    let mut u_c = Vec::with_capacity(n);
    for i in 0..n {
        let zv = z_v.row(i);
        let zc = z_c.row(i);
        let sv_pre: f64 = a.iter().zip(zv).map(|(x, y)| x * y).sum();
        let sc_pre: f64 = a.iter().zip(zc).map(|(x, y)| x * y).sum();
        let sv = leaky(sv_pre, ATTENTION_LEAKY_SLOPE);
        let sc = leaky(sc_pre, ATTENTION_LEAKY_SLOPE);
        let m = sv.max(sc);
        let ev = (sv - m).exp();
        let ec = (sc - m).exp();
        let av = ev / (ev + ec);
        alpha.push(av);
        u_v.push(sv_pre);
        u_c.push(sc_pre);
        for (o, (&zvi, &zci)) in fused.row_mut(i).iter_mut().zip(zv.iter().zip(zc)) {
            *o = av * zvi + (1.0 - av) * zci;
        }
    }
    (fused, alpha, (u_v, u_c))
}

/// Graph-level pooling of per-node values.
pub fn pool(values: &Dense, pooling: Pooling) -> Result<Vec<f64>> {
    Ok(pool_with_argmax(values, pooling)?.0)
}

fn pool_with_argmax(values: &Dense, pooling: Pooling) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
    let (n, c) = (values.rows, values.cols);
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    match pooling {
        Pooling::Mean => {
            let mut out = vec![0.0; c];
            for i in 0..n {
                for (o, &v) in out.iter_mut().zip(values.row(i)) {
                    *o += v;
                }
            }
            for o in &mut out {
                *o /= n as f64;
            }
            Ok((out, None))
        }
        Pooling::Sum => {
            let mut out = vec![0.0; c];
            for i in 0..n {
                for (o, &v) in out.iter_mut().zip(values.row(i)) {
                    *o += v;
                }
            }
            Ok((out, None))
        }
        Pooling::Max => {
            let mut out = vec![f64::NEG_INFINITY; c];
            let mut arg = vec![0usize; c];
            for i in 0..n {
                for (j, &v) in values.row(i).iter().enumerate() {
                    if v > out[j] {
                        out[j] = v;
                        arg[j] = i;
                    }
                }
            }
            Ok((out, Some(arg)))
        }
    }
}

fn head_forward(
    fused: &Dense,
    params: &ModelParams,
    task: &TaskHead,
    mode: Mode,
    rng: &mut Option<&mut ChaCha12Rng>,
) -> (HeadTrace, Dense) {
    let dims = &params.dims;
    let (n, d) = (fused.rows, dims.d);
    let c = task.out_dim();
    let name = &task.name;

    let mut a1_pre = Dense::zeros(n, d);
    matmul_acc_raw(&fused.data, n, d, params.seg(&format!("head.{name}.w1")), d, &mut a1_pre.data);
    add_row_bias(&mut a1_pre, params.seg(&format!("head.{name}.b1")));
    let mut a1 = a1_pre.clone();
    apply_activation(&mut a1, 0.0);
    let mut mask1 = Vec::new();
    if mode == Mode::Train && dims.dropout > 0.0 {
        let rng = rng.as_mut().expect("train-mode head with dropout needs an rng");
        mask1 = dropout_mask(a1.data.len(), dims.dropout, rng);
        for (v, &m) in a1.data.iter_mut().zip(&mask1) {
            *v *= m;
        }
    }

    let mut a2_pre = Dense::zeros(n, d);
    matmul_acc_raw(&a1.data, n, d, params.seg(&format!("head.{name}.w2")), d, &mut a2_pre.data);
    add_row_bias(&mut a2_pre, params.seg(&format!("head.{name}.b2")));
    let mut a2 = a2_pre.clone();
    apply_activation(&mut a2, 0.0);
    let mut mask2 = Vec::new();
    if mode == Mode::Train && dims.dropout > 0.0 {
        let rng = rng.as_mut().expect("train-mode head with dropout needs an rng");
        mask2 = dropout_mask(a2.data.len(), dims.dropout, rng);
        for (v, &m) in a2.data.iter_mut().zip(&mask2) {
            *v *= m;
        }
    }

    let mut logits = Dense::zeros(n, c);
    matmul_acc_raw(&a2.data, n, d, params.seg(&format!("head.{name}.w3")), c, &mut logits.data);
    add_row_bias(&mut logits, params.seg(&format!("head.{name}.b3")));

    (HeadTrace { a1_pre, a1_dropped: a1, mask1, a2_pre, a2_dropped: a2, mask2 }, logits)
}

/// Full forward pass over one image's precomputed features.
///
/// Composes the active branches, the configured fusion, and every task head,
/// then pools node logits into graph-level outputs. Eval mode never applies
/// dropout and is bit-deterministic; train mode records the intermediates
/// the backward pass needs.
pub fn full_forward(
    pf: &PrecomputedFeatures,
    params: &ModelParams,
    mode: Mode,
    mut rng: Option<&mut ChaCha12Rng>,
) -> Result<ForwardTrace> {
    let dims = &params.dims;
    if pf.n == 0 {
        return Err(Error::EmptyGraph);
    }
    if pf.k != dims.k {
        return Err(Error::DimMismatch {
            expected: format!("K={} hops", dims.k),
            got: format!("K={}", pf.k),
        });
    }

    let mut trace_v = None;
    let mut trace_c = None;
    let mut z_v = None;
    let mut z_c = None;
    if dims.variant.uses_voronoi() {
        let (t, z) = branch_forward_traced(&pf.voronoi_hops, params, true, mode, &mut rng)?;
        trace_v = Some(t);
        z_v = Some(z);
    }
    if dims.variant.uses_celltype() {
        let (t, z) = branch_forward_traced(&pf.celltype_hops, params, false, mode, &mut rng)?;
        trace_c = Some(t);
        z_c = Some(z);
    }

    let mut alpha = None;
    let mut attn_scores = None;
    let fused = match dims.variant {
        Variant::Voronoi => z_v.clone().unwrap(),
        Variant::Celltype => z_c.clone().unwrap(),
        Variant::Sum => {
            let (zv, zc) = (z_v.as_ref().unwrap(), z_c.as_ref().unwrap());
            let mut out = zv.clone();
            for (o, &v) in out.data.iter_mut().zip(&zc.data) {
                *o += v;
            }
            out
        }
        Variant::Concat => {
            let (zv, zc) = (z_v.as_ref().unwrap(), z_c.as_ref().unwrap());
            let n = zv.rows;
            let d = dims.d;
            let mut cat = Dense::zeros(n, 2 * d);
            for i in 0..n {
                cat.row_mut(i)[..d].copy_from_slice(zv.row(i));
                cat.row_mut(i)[d..].copy_from_slice(zc.row(i));
            }
            let mut out = Dense::zeros(n, d);
            matmul_acc_raw(&cat.data, n, 2 * d, params.seg("wf"), d, &mut out.data);
            add_row_bias(&mut out, params.seg("bf"));
            out
        }
        Variant::Attention => {
            let (zv, zc) = (z_v.as_ref().unwrap(), z_c.as_ref().unwrap());
            let (fused, a, scores) = attention_fuse_traced(zv, zc, params.seg("attn"));
            alpha = Some(a);
            attn_scores = Some(scores);
            fused
        }
    };

    let mut node_logits = Vec::with_capacity(dims.tasks.len());
    let mut pooled = Vec::with_capacity(dims.tasks.len());
    let mut pool_argmax = Vec::with_capacity(dims.tasks.len());
    let mut head_traces = Vec::with_capacity(dims.tasks.len());
    for task in &dims.tasks {
        let (ht, logits) = head_forward(&fused, params, task, mode, &mut rng);
        let (p, arg) = pool_with_argmax(&logits, dims.pooling)?;
        node_logits.push(logits);
        pooled.push(p);
        pool_argmax.push(arg);
        head_traces.push(ht);
    }

    let train = (mode == Mode::Train).then_some(TrainTrace {
        voronoi: trace_v,
        celltype: trace_c,
        attn_scores,
        heads: head_traces,
    });
    Ok(ForwardTrace {
        z_voronoi: z_v,
        z_celltype: z_c,
        alpha,
        fused,
        node_logits,
        pooled,
        pool_argmax,
        train,
    })
}
