//! Exact reverse-mode gradients through the full forward pass.
//!
//! Mirrors `model::full_forward` step by step in reverse: pooling, heads,
//! fusion, combiners, per-hop transforms. Hop matrices are constants, so
//! backpropagation stops at the per-hop weights. With shared hop weights the
//! two branches accumulate into the same segment.

use crate::dense::{col_sums_acc, matmul_a_bt_acc, matmul_at_b_acc, Dense};
use crate::error::{Error, Result};
use crate::model::{
    Activation, ForwardTrace, ModelParams, Pooling, Variant, ATTENTION_LEAKY_SLOPE,
};
use crate::precompute::PrecomputedFeatures;

/// Derivative factor of the shared activation at a pre-activation value.
#[inline]
fn act_deriv(pre: f64, slope: f64) -> f64 {
    if pre >= 0.0 {
        1.0
    } else {
        slope
    }
}

struct GradSink<'a> {
    params: &'a ModelParams,
    grad: Vec<f64>,
}

impl<'a> GradSink<'a> {
    fn new(params: &'a ModelParams) -> Self {
        GradSink { params, grad: vec![0.0; params.values.len()] }
    }

    fn seg_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.params.layout.seg(name);
        &mut self.grad[s.offset..s.offset + s.len()]
    }

    fn add_scalar(&mut self, name: &str, v: f64) {
        self.seg_mut(name)[0] += v;
    }
}

/// Backward through one activation site: writes d_pre into `d_out` in place
/// and returns the accumulated slope gradient (nonzero only for PReLU).
fn activation_backward(d_out: &mut [f64], pre: &[f64], slope: f64, want_slope_grad: bool) -> f64 {
    debug_assert_eq!(d_out.len(), pre.len());
    let mut g_slope = 0.0;
    for (d, &p) in d_out.iter_mut().zip(pre) {
        if want_slope_grad && p < 0.0 {
            g_slope += *d * p;
        }
        *d *= act_deriv(p, slope);
    }
    g_slope
}

fn apply_mask(d: &mut [f64], mask: &[f64]) {
    if !mask.is_empty() {
        for (v, &m) in d.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

/// Gradient of every parameter for one graph given per-task gradients of the
/// pooled outputs. Tasks with `None` contribute nothing. Requires a trace
/// produced in train mode.
pub fn backward(
    pf: &PrecomputedFeatures,
    params: &ModelParams,
    trace: &ForwardTrace,
    d_pooled: &[Option<Vec<f64>>],
) -> Result<Vec<f64>> {
    let dims = &params.dims;
    let Some(train) = &trace.train else {
        return Err(Error::InvalidConfig {
            reason: "backward requires a train-mode forward trace".into(),
        });
    };
    if d_pooled.len() != dims.tasks.len() {
        return Err(Error::DimMismatch {
            expected: format!("{} task gradients", dims.tasks.len()),
            got: format!("{}", d_pooled.len()),
        });
    }
    let (n, d) = (pf.n, dims.d);
    let slope = match dims.activation {
        Activation::Relu => 0.0,
        Activation::PRelu => params.prelu_slope(),
        Activation::Identity => 1.0,
    };
    let want_slope_grad = dims.activation == Activation::PRelu;
    let mut sink = GradSink::new(params);
    let mut d_fused = Dense::zeros(n, d);

    // ── heads, in reverse ──
    for (t, task) in dims.tasks.iter().enumerate() {
        let Some(dp) = &d_pooled[t] else { continue };
        let c = task.out_dim();
        debug_assert_eq!(dp.len(), c);
        let ht = &train.heads[t];
        let name = &task.name;

        // pooling backward
        let mut d_logits = Dense::zeros(n, c);
        match dims.pooling {
            Pooling::Mean => {
                let inv = 1.0 / n as f64;
                for i in 0..n {
                    for (o, &g) in d_logits.row_mut(i).iter_mut().zip(dp) {
                        *o = g * inv;
                    }
                }
            }
            Pooling::Sum => {
                for i in 0..n {
                    for (o, &g) in d_logits.row_mut(i).iter_mut().zip(dp) {
                        *o = g;
                    }
                }
            }
            Pooling::Max => {
                let arg = trace.pool_argmax[t].as_ref().expect("max pooling records argmax");
                for (j, &g) in dp.iter().enumerate() {
                    d_logits.set(arg[j], j, g);
                }
            }
        }

        // layer 3
        matmul_at_b_acc(
            &ht.a2_dropped.data,
            n,
            d,
            &d_logits.data,
            c,
            sink.seg_mut(&format!("head.{name}.w3")),
        );
        col_sums_acc(&d_logits.data, n, c, sink.seg_mut(&format!("head.{name}.b3")));
        let mut d_a2 = Dense::zeros(n, d);
        matmul_a_bt_acc(
            &d_logits.data,
            n,
            c,
            params.seg(&format!("head.{name}.w3")),
            d,
            &mut d_a2.data,
        );
        apply_mask(&mut d_a2.data, &ht.mask2);
        activation_backward(&mut d_a2.data, &ht.a2_pre.data, 0.0, false);

        // layer 2
        matmul_at_b_acc(
            &ht.a1_dropped.data,
            n,
            d,
            &d_a2.data,
            d,
            sink.seg_mut(&format!("head.{name}.w2")),
        );
        col_sums_acc(&d_a2.data, n, d, sink.seg_mut(&format!("head.{name}.b2")));
        let mut d_a1 = Dense::zeros(n, d);
        matmul_a_bt_acc(&d_a2.data, n, d, params.seg(&format!("head.{name}.w2")), d, &mut d_a1.data);
        apply_mask(&mut d_a1.data, &ht.mask1);
        activation_backward(&mut d_a1.data, &ht.a1_pre.data, 0.0, false);

        // layer 1
        matmul_at_b_acc(
            &trace.fused.data,
            n,
            d,
            &d_a1.data,
            d,
            sink.seg_mut(&format!("head.{name}.w1")),
        );
        col_sums_acc(&d_a1.data, n, d, sink.seg_mut(&format!("head.{name}.b1")));
        matmul_a_bt_acc(&d_a1.data, n, d, params.seg(&format!("head.{name}.w1")), d, &mut d_fused.data);
    }

    // ── fusion backward ──
    let mut d_z_v: Option<Dense> = None;
    let mut d_z_c: Option<Dense> = None;
    match dims.variant {
        Variant::Voronoi => d_z_v = Some(d_fused),
        Variant::Celltype => d_z_c = Some(d_fused),
        Variant::Sum => {
            d_z_v = Some(d_fused.clone());
            d_z_c = Some(d_fused);
        }
        Variant::Concat => {
            let z_v = trace.z_voronoi.as_ref().unwrap();
            let z_c = trace.z_celltype.as_ref().unwrap();
            let mut cat = Dense::zeros(n, 2 * d);
            for i in 0..n {
                cat.row_mut(i)[..d].copy_from_slice(z_v.row(i));
                cat.row_mut(i)[d..].copy_from_slice(z_c.row(i));
            }
            matmul_at_b_acc(&cat.data, n, 2 * d, &d_fused.data, d, sink.seg_mut("wf"));
            col_sums_acc(&d_fused.data, n, d, sink.seg_mut("bf"));
            let mut d_cat = Dense::zeros(n, 2 * d);
            matmul_a_bt_acc(&d_fused.data, n, d, params.seg("wf"), 2 * d, &mut d_cat.data);
            let mut dv = Dense::zeros(n, d);
            let mut dc = Dense::zeros(n, d);
            for i in 0..n {
                dv.row_mut(i).copy_from_slice(&d_cat.row(i)[..d]);
                dc.row_mut(i).copy_from_slice(&d_cat.row(i)[d..]);
            }
            d_z_v = Some(dv);
            d_z_c = Some(dc);
        }
        Variant::Attention => {
            let z_v = trace.z_voronoi.as_ref().unwrap();
            let z_c = trace.z_celltype.as_ref().unwrap();
            let alpha = trace.alpha.as_ref().unwrap();
            let (u_v, u_c) = train.attn_scores.as_ref().unwrap();
            let a = params.seg("attn");
            let mut dv = Dense::zeros(n, d);
            let mut dc = Dense::zeros(n, d);
            let mut g_a = vec![0.0f64; d];
            for i in 0..n {
                let df = d_fused.row(i);
                let zv = z_v.row(i);
                let zc = z_c.row(i);
                let av = alpha[i];

                // direct paths: z̃ = α z_v + (1−α) z_c
                for (o, &g) in dv.row_mut(i).iter_mut().zip(df) {
                    *o += av * g;
                }
                for (o, &g) in dc.row_mut(i).iter_mut().zip(df) {
                    *o += (1.0 - av) * g;
                }

                // attention path: α = σ(s_v − s_c), s = LeakyReLU(u)
                let d_alpha: f64 =
                    df.iter().zip(zv.iter().zip(zc)).map(|(&g, (&v, &c))| g * (v - c)).sum();
                let d_sv = d_alpha * av * (1.0 - av);
                let d_sc = -d_sv;
                let d_uv = d_sv * act_deriv(u_v[i], ATTENTION_LEAKY_SLOPE);
                let d_uc = d_sc * act_deriv(u_c[i], ATTENTION_LEAKY_SLOPE);
                for j in 0..d {
                    g_a[j] += d_uv * zv[j] + d_uc * zc[j];
                    dv.row_mut(i)[j] += d_uv * a[j];
                    dc.row_mut(i)[j] += d_uc * a[j];
                }
            }
            for (o, g) in sink.seg_mut("attn").iter_mut().zip(g_a) {
                *o += g;
            }
            d_z_v = Some(dv);
            d_z_c = Some(dc);
        }
    }

    // ── branch backward ──
    let mut branch_back = |voronoi_branch: bool, d_z: Dense| {
        let bt = if voronoi_branch {
            train.voronoi.as_ref().unwrap()
        } else {
            train.celltype.as_ref().unwrap()
        };
        let hops = if voronoi_branch { &pf.voronoi_hops } else { &pf.celltype_hops };
        let k = dims.k;
        let wz_name = if voronoi_branch { "wz_v" } else { "wz_c" };
        let bz_name = if voronoi_branch { "bz_v" } else { "bz_c" };

        let mut d_zpre = d_z;
        let gs = activation_backward(&mut d_zpre.data, &bt.z_pre.data, slope, want_slope_grad);
        if want_slope_grad {
            sink.add_scalar("prelu", gs);
        }
        matmul_at_b_acc(&bt.h_dropped.data, n, (k + 1) * d, &d_zpre.data, d, sink.seg_mut(wz_name));
        col_sums_acc(&d_zpre.data, n, d, sink.seg_mut(bz_name));
        let mut d_h = Dense::zeros(n, (k + 1) * d);
        matmul_a_bt_acc(&d_zpre.data, n, d, params.seg(wz_name), (k + 1) * d, &mut d_h.data);
        apply_mask(&mut d_h.data, &bt.h_mask);

        for hop in 0..=k {
            // slice this hop's block out of dH
            let mut d_block = Dense::zeros(n, d);
            for i in 0..n {
                d_block
                    .row_mut(i)
                    .copy_from_slice(&d_h.row(i)[hop * d..(hop + 1) * d]);
            }
            let gs =
                activation_backward(&mut d_block.data, &bt.pre_hops[hop].data, slope, want_slope_grad);
            if want_slope_grad {
                sink.add_scalar("prelu", gs);
            }
            let w_name = params.hop_weight_name(voronoi_branch, hop);
            let b_name = params.hop_bias_name(voronoi_branch, hop);
            matmul_at_b_acc(
                &hops[hop].data,
                n,
                dims.f,
                &d_block.data,
                d,
                sink.seg_mut(&w_name),
            );
            col_sums_acc(&d_block.data, n, d, sink.seg_mut(&b_name));
        }
    };

    if let Some(dv) = d_z_v {
        branch_back(true, dv);
    }
    if let Some(dc) = d_z_c {
        branch_back(false, dc);
    }
    Ok(sink.grad)
}
