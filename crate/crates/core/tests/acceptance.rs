//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//! Run with: cargo test -p mew-core --test acceptance -- --test-threads=1 --nocapture

use mew_core::cell_data::{
    generate_synthetic, Label, Mechanism, Split, SynthConfig, SynthTask, TaskKind, TaskSpec,
};
use mew_core::dense::Dense;
use mew_core::geometry::{delaunay_adjacency, keep_probability};
use mew_core::metrics::{auc_roc, c_index_detailed};
use mew_core::model::{
    full_forward, Activation, Mode, ModelDims, ModelParams, Pooling, TaskHead, Variant,
};
use mew_core::multiplex::{assemble_multiplex, homophily_ratio};
use mew_core::pipeline::{
    build_caches, eval_split, load_train_dataset, BuildOptions, FeatureSource, LoadedDataset,
};
use mew_core::precompute::{
    cache_read, normalize_adjacency, precompute_image, sample_with_keep_probs, spmm, CacheIndex,
    PrecomputedFeatures,
};
use mew_core::training::{
    backward, ce_loss, cox_loss, train, ModelOptions, TrainConfig, TrainDataset,
};
use mew_core::Error;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

fn pass(criterion: &str, detail: String) {
    println!("acceptance {criterion}: PASS — {detail}");
}

// ── shared fixtures ─────────────────────────────────────────────────────────

fn rng(seed: u64) -> ChaCha12Rng {
    mew_core::rng::stream(seed, 0xACCE97)
}

/// Random multiplex instance built through the real geometry/assembly path.
fn random_instance(n_cells: usize, types: usize, fb: usize, seed: u64) -> PrecomputedFeatures {
    let cfg = SynthConfig {
        images: 1,
        cells_min: n_cells,
        cells_max: n_cells,
        num_types: types,
        biomarker_dim: fb,
        type_means: None,
        type_mean_scale: 2.0,
        noise_std: 1.0,
        image_shift_std: 0.0,
        mixing: 0.6,
        width: 400.0,
        blob_sigma_frac: 0.15,
        type_fracs: None,
        frac_jitter: 0.3,
        groups: 1,
        split_groups: (1, 0, 0),
        size_mean: 30.0,
        size_cv: 0.2,
        tasks: vec![SynthTask {
            name: "t".into(),
            mechanism: Mechanism::Composition {
                target_type: 0,
                threshold: 0.3,
                spread: 0.1,
                partner_type: None,
                pair_total: None,
            },
        }],
    };
    let (tables, _) = generate_synthetic(&cfg, seed).unwrap();
    let edges = delaunay_adjacency(&tables[0].positions()).unwrap();
    let graph = assemble_multiplex(&tables[0], edges).unwrap();
    precompute_image(&graph, 3, seed, true).unwrap()
}

fn dataset_in_memory(cfg: &SynthConfig, seed: u64) -> LoadedDataset {
    let (tables, manifest) = generate_synthetic(cfg, seed).unwrap();
    LoadedDataset {
        manifest,
        root: std::path::PathBuf::from("."),
        tables: tables.into_iter().map(|t| (t.image_id.clone(), t)).collect(),
    }
}

// ── criterion 1: gradient exactness ─────────────────────────────────────────

#[test]
fn criterion_1_gradient_exactness() {
    let started = Instant::now();
    let pfs: Vec<PrecomputedFeatures> =
        (0..3).map(|s| random_instance(30, 3, 4, 900 + s)).collect();
    assert_eq!(pfs[0].f, 5, "F = 4 biomarkers + size");
    let dims = ModelDims {
        f: 5,
        d: 8,
        k: 3,
        shared: true,
        variant: Variant::Attention,
        activation: Activation::Relu,
        pooling: Pooling::Mean,
        dropout: 0.0,
        tasks: vec![
            TaskHead { name: "cls".into(), kind: TaskKind::Binary },
            TaskHead { name: "surv".into(), kind: TaskKind::Hazard },
        ],
    };
    let mut params = ModelParams::init(dims, 7).unwrap();
    // fully random parameters keep pre-activations off exact ReLU kinks,
    // where a central difference measures the half-derivative
    let mut r = rng(1);
    for v in &mut params.values {
        *v = r.random::<f64>() * 0.8 - 0.4;
    }

    let labels = [1u8, 0, 1];
    let times = [2.0, 4.5, 1.0];
    let events = [1u8, 0, 1];
    // Signature of the piecewise-linear region: sign pattern of every ReLU
    // and LeakyReLU pre-activation. A central difference only estimates the
    // derivative when both probe points sit in the same region.
    let region_signature = |traces: &[mew_core::model::ForwardTrace]| -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |x: f64| {
            h ^= (x >= 0.0) as u64 + 1;
            h = h.wrapping_mul(0x100000001b3);
        };
        for t in traces {
            let tt = t.train.as_ref().unwrap();
            for bt in [tt.voronoi.as_ref(), tt.celltype.as_ref()].into_iter().flatten() {
                for pre in &bt.pre_hops {
                    pre.data.iter().copied().for_each(&mut feed);
                }
                bt.z_pre.data.iter().copied().for_each(&mut feed);
            }
            if let Some((u_v, u_c)) = &tt.attn_scores {
                u_v.iter().copied().for_each(&mut feed);
                u_c.iter().copied().for_each(&mut feed);
            }
            for ht in &tt.heads {
                ht.a1_pre.data.iter().copied().for_each(&mut feed);
                ht.a2_pre.data.iter().copied().for_each(&mut feed);
            }
        }
        h
    };
    let loss_and_grad = |p: &ModelParams, want_grad: bool| -> (f64, Vec<f64>, u64) {
        let traces: Vec<_> =
            pfs.iter().map(|pf| full_forward(pf, p, Mode::Train, None).unwrap()).collect();
        let sig = region_signature(&traces);
        let risks: Vec<f64> = traces.iter().map(|t| t.pooled[1][0]).collect();
        let (cox, cox_g) = cox_loss(&risks, &times, &events).unwrap();
        let mut total = cox;
        let mut grad = vec![0.0; p.values.len()];
        for (g, trace) in traces.iter().enumerate() {
            let (ce, ce_g) = ce_loss(&trace.pooled[0], labels[g]);
            total += ce;
            if want_grad {
                let d = vec![Some(ce_g), Some(vec![cox_g[g]])];
                let gg = backward(&pfs[g], p, trace, &d).unwrap();
                for (a, b) in grad.iter_mut().zip(gg) {
                    *a += b;
                }
            }
        }
        (total, grad, sig)
    };

    let (_, analytic, _) = loss_and_grad(&params, true);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut r = rng(2);
    let mut checked = 0;
    let mut skipped_kinks = 0;
    while checked < 200 {
        let c = r.random_range(0..params.values.len());
        let mut up = params.clone();
        up.values[c] += h;
        let mut dn = params.clone();
        dn.values[c] -= h;
        let (lu, _, sig_up) = loss_and_grad(&up, false);
        let (ld, _, sig_dn) = loss_and_grad(&dn, false);
        if sig_up != sig_dn {
            // probe window straddles a ReLU kink; the difference quotient
            // does not measure the derivative there
            skipped_kinks += 1;
            assert!(skipped_kinks < 200, "too many kink crossings; instance unsuitable");
            continue;
        }
        let fd = (lu - ld) / (2.0 * h);
        let rel = (fd - analytic[c]).abs() / analytic[c].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-4,
            "coordinate {c} ({}): fd {fd} vs analytic {}",
            params.layout.segment_of(c).name,
            analytic[c]
        );
        checked += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1}s exceeds 30s");
    pass("1 (gradient exactness)", format!("200 coords ({skipped_kinks} kink-straddling probes resampled), worst rel err {worst:.2e}, {secs:.1}s"));
}

// ── criterion 2: oracle equivalence ─────────────────────────────────────────

fn dense_normalized_oracle(n: usize, pairs: &[(u32, u32)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(i, j) in pairs {
        a[i as usize][j as usize] = 1.0;
        a[j as usize][i as usize] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

fn dense_mm(a: &[Vec<f64>], x: &Dense) -> Dense {
    let n = a.len();
    let f = x.cols;
    let mut out = Dense::zeros(n, f);
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                for c in 0..f {
                    out.data[i * f + c] += a[i][j] * x.get(j, c);
                }
            }
        }
    }
    out
}

/// Fully independent forward reimplementation (attention variant, shared
/// weights, ReLU, mean pooling).
fn oracle_forward(pf: &PrecomputedFeatures, params: &ModelParams) -> Vec<Vec<f64>> {
    let dims = &params.dims;
    let (n, d, k, f) = (pf.n, dims.d, dims.k, dims.f);
    let relu = |x: f64| if x > 0.0 { x } else { 0.0 };
    let run_branch = |hops: &Vec<Dense>, wz_name: &str, bz_name: &str| -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; (k + 1) * d]; n];
        for hop in 0..=k {
            let w = params.seg(&format!("w.{hop}"));
            let b = params.seg(&format!("b.{hop}"));
            for i in 0..n {
                for c in 0..d {
                    let mut acc = b[c];
                    for a in 0..f {
                        acc += hops[hop].get(i, a) * w[a * d + c];
                    }
                    h[i][hop * d + c] = relu(acc);
                }
            }
        }
        let wz = params.seg(wz_name);
        let bz = params.seg(bz_name);
        let mut z = vec![vec![0.0; d]; n];
        for i in 0..n {
            for c in 0..d {
                let mut acc = bz[c];
                for a in 0..(k + 1) * d {
                    acc += h[i][a] * wz[a * d + c];
                }
                z[i][c] = relu(acc);
            }
        }
        z
    };
    let z_v = run_branch(&pf.voronoi_hops, "wz_v", "bz_v");
    let z_c = run_branch(&pf.celltype_hops, "wz_c", "bz_c");
    let attn = params.seg("attn");
    let mut pooled_out = Vec::new();
    let mut fused = vec![vec![0.0; d]; n];
    for i in 0..n {
        let uv: f64 = (0..d).map(|c| attn[c] * z_v[i][c]).sum();
        let uc: f64 = (0..d).map(|c| attn[c] * z_c[i][c]).sum();
        let lv = if uv >= 0.0 { uv } else { 0.3 * uv };
        let lc = if uc >= 0.0 { uc } else { 0.3 * uc };
        let av = lv.exp() / (lv.exp() + lc.exp());
        for c in 0..d {
            fused[i][c] = av * z_v[i][c] + (1.0 - av) * z_c[i][c];
        }
    }
    for task in &params.dims.tasks {
        let name = &task.name;
        let cdim = task.out_dim();
        let w1 = params.seg(&format!("head.{name}.w1"));
        let b1 = params.seg(&format!("head.{name}.b1"));
        let w2 = params.seg(&format!("head.{name}.w2"));
        let b2 = params.seg(&format!("head.{name}.b2"));
        let w3 = params.seg(&format!("head.{name}.w3"));
        let b3 = params.seg(&format!("head.{name}.b3"));
        let mut pooled = vec![0.0; cdim];
        for i in 0..n {
            let mut a1 = vec![0.0; d];
            for c in 0..d {
                let mut acc = b1[c];
                for x in 0..d {
                    acc += fused[i][x] * w1[x * d + c];
                }
                a1[c] = relu(acc);
            }
            let mut a2 = vec![0.0; d];
            for c in 0..d {
                let mut acc = b2[c];
                for x in 0..d {
                    acc += a1[x] * w2[x * d + c];
                }
                a2[c] = relu(acc);
            }
            for c in 0..cdim {
                let mut acc = b3[c];
                for x in 0..d {
                    acc += a2[x] * w3[x * cdim + c];
                }
                pooled[c] += acc;
            }
        }
        for p in &mut pooled {
            *p /= n as f64;
        }
        pooled_out.push(pooled);
    }
    pooled_out
}

#[test]
fn criterion_2_oracle_equivalence() {
    let started = Instant::now();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let n = r.random_range(5..=100);
        let k = r.random_range(1..=4);
        let f = r.random_range(3..=6);
        // random undirected graph
        let mut pairs = Vec::new();
        let p_edge = 0.08 + r.random::<f64>() * 0.12;
        for i in 0..n as u32 {
            for j in (i + 1)..n as u32 {
                if r.random::<f64>() < p_edge {
                    pairs.push((i, j));
                }
            }
        }
        let x = Dense::from_vec(
            n,
            f,
            (0..n * f).map(|_| r.random::<f64>() * 4.0 - 2.0).collect(),
        );

        // normalize_adjacency vs dense oracle
        let sparse = normalize_adjacency(n, &pairs).unwrap();
        let dense = dense_normalized_oracle(n, &pairs);
        for i in 0..n {
            let (cols, vals) = sparse.row(i);
            let mut row = vec![0.0; n];
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
            for j in 0..n {
                worst = worst.max((row[j] - dense[i][j]).abs());
            }
        }

        // spmm vs dense oracle
        let fast = spmm(&sparse, &x).unwrap();
        let slow = dense_mm(&dense, &x);
        worst = worst.max(fast.max_abs_diff(&slow));

        // precompute (stochastic off) vs dense powers: type cliques layer
        let types: Vec<u32> = (0..n).map(|_| r.random_range(0..3u32)).collect();
        let mut clique_pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if types[i] == types[j] {
                    clique_pairs.push((i as u32, j as u32));
                }
            }
        }
        let table = mew_core::cell_data::CellTable {
            image_id: "oracle".into(),
            biomarker_names: (0..f - 1).map(|d| format!("b{d}")).collect(),
            cells: (0..n)
                .map(|i| mew_core::cell_data::Cell {
                    cell_id: i as u64,
                    x: r.random::<f64>() * 300.0,
                    y: r.random::<f64>() * 300.0,
                    size: x.get(i, f - 1).abs() + 0.5,
                    biomarkers: x.row(i)[..f - 1].to_vec(),
                    cell_type: Some(format!("t{}", types[i])),
                })
                .collect(),
        };
        let voronoi = delaunay_adjacency(&table.positions()).unwrap();
        let graph = assemble_multiplex(&table, voronoi).unwrap();
        let pf = precompute_image(&graph, k, trial, false).unwrap();
        let dense_v = dense_normalized_oracle(n, &graph.voronoi.pairs().collect::<Vec<_>>());
        let dense_c = dense_normalized_oracle(n, &clique_pairs);
        let x0 = graph.features.clone();
        let mut hop_v = x0.clone();
        let mut hop_c = x0.clone();
        for hop in 1..=k {
            hop_v = dense_mm(&dense_v, &hop_v);
            hop_c = dense_mm(&dense_c, &hop_c);
            worst = worst.max(pf.voronoi_hops[hop].max_abs_diff(&hop_v));
            worst = worst.max(pf.celltype_hops[hop].max_abs_diff(&hop_c));
        }

        // full_forward vs independent oracle
        let d = r.random_range(4..=8);
        let dims = ModelDims {
            f: pf.f,
            d,
            k,
            shared: true,
            variant: Variant::Attention,
            activation: Activation::Relu,
            pooling: Pooling::Mean,
            dropout: 0.0,
            tasks: vec![
                TaskHead { name: "cls".into(), kind: TaskKind::Binary },
                TaskHead { name: "surv".into(), kind: TaskKind::Hazard },
            ],
        };
        let params = ModelParams::init(dims, trial + 1000).unwrap();
        let got = full_forward(&pf, &params, Mode::Eval, None).unwrap();
        let want = oracle_forward(&pf, &params);
        for (g, w) in got.pooled.iter().zip(&want) {
            for (a, b) in g.iter().zip(w) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-10, "trial {trial}: worst deviation {worst:.3e}");
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 120.0, "runtime {secs:.1}s exceeds 2 min");
    pass("2 (oracle equivalence)", format!("100 instances, worst abs diff {worst:.2e}, {secs:.1}s"));
}

// ── criterion 3: metric oracles ─────────────────────────────────────────────

#[test]
fn criterion_3_metric_oracles() {
    let mut r = rng(4);
    let mut checked_auc = 0usize;
    let mut checked_c = 0usize;
    for _ in 0..1000 {
        let m = r.random_range(2..=200);
        // quantized scores force ties through both code paths
        let scores: Vec<f64> =
            (0..m).map(|_| (r.random::<f64>() * 30.0).round() / 30.0).collect();
        let labels: Vec<u8> = (0..m).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
        let brute = {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    if labels[i] == 1 && labels[j] == 0 {
                        den += 1.0;
                        num += if scores[i] > scores[j] {
                            1.0
                        } else if scores[i] == scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            (den > 0.0).then_some(num / den)
        };
        match (auc_roc(&scores, &labels), brute) {
            (Ok(a), Some(b)) => {
                assert!((a - b).abs() <= 1e-12, "auc {a} vs {b}");
                checked_auc += 1;
            }
            (Err(Error::SingleClass), None) => {}
            (got, want) => panic!("auc mismatch: {got:?} vs {want:?}"),
        }

        let censoring = r.random::<f64>() * 0.5;
        let times: Vec<f64> =
            (0..m).map(|_| (r.random::<f64>() * 10.0).ceil().max(1.0)).collect();
        let events: Vec<u8> = (0..m).map(|_| u8::from(r.random::<f64>() >= censoring)).collect();
        let brute = {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    if i != j && events[i] == 1 && times[i] < times[j] {
                        den += 1.0;
                        num += if scores[i] > scores[j] {
                            1.0
                        } else if scores[i] == scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            (den > 0.0).then_some(num / den)
        };
        match (c_index_detailed(&scores, &times, &events), brute) {
            (Ok(d), Some(b)) => {
                assert!((d.value - b).abs() <= 1e-12, "c-index {v} vs {b}", v = d.value);
                checked_c += 1;
            }
            (Err(Error::NoComparablePairs), None) => {}
            (got, want) => panic!("c-index mismatch: {got:?} vs {want:?}"),
        }
    }
    pass(
        "3 (metric oracles)",
        format!("{checked_auc} AUC and {checked_c} C-index instances exact to 1e-12"),
    );
}

// ── criterion 4: homophily regime ───────────────────────────────────────────

/// Generator configuration calibrated so the Voronoi homophily ratio lands
/// in the regime reported for real multiplexed-imaging cohorts.
fn homophily_calibration_config() -> SynthConfig {
    SynthConfig {
        images: 50,
        cells_min: 300,
        cells_max: 600,
        num_types: 4,
        biomarker_dim: 4,
        type_means: None,
        type_mean_scale: 2.0,
        noise_std: 1.0,
        image_shift_std: 0.0,
        mixing: 0.7,
        width: 1000.0,
        blob_sigma_frac: 0.12,
        type_fracs: None,
        frac_jitter: 0.25,
        groups: 7,
        split_groups: (4, 1, 2),
        size_mean: 50.0,
        size_cv: 0.3,
        tasks: vec![SynthTask {
            name: "comp".into(),
            mechanism: Mechanism::Composition {
                target_type: 0,
                threshold: 0.25,
                spread: 0.1,
                partner_type: None,
                pair_total: None,
            },
        }],
    }
}

const HOMOPHILY_TARGET: f64 = 0.30;

#[test]
fn criterion_4_homophily_regime() {
    let cfg = homophily_calibration_config();
    let mut means = Vec::new();
    for seed in [100u64, 101, 102] {
        let (tables, _) = generate_synthetic(&cfg, seed).unwrap();
        let mut sum = 0.0;
        for t in &tables {
            let edges = delaunay_adjacency(&t.positions()).unwrap();
            let g = assemble_multiplex(t, edges).unwrap();
            sum += homophily_ratio(&g.voronoi, &g.type_codes).unwrap();
        }
        let mean = sum / tables.len() as f64;
        assert!(
            (0.25..=0.34).contains(&mean),
            "seed {seed}: mean homophily {mean:.4} outside [0.25, 0.34]"
        );
        assert!(
            (mean - HOMOPHILY_TARGET).abs() <= 0.03,
            "seed {seed}: mean homophily {mean:.4} not within ±0.03 of {HOMOPHILY_TARGET}"
        );
        means.push(mean);
    }
    pass(
        "4 (homophily regime)",
        format!("50-image means {means:?} within [0.25,0.34] and ±0.03 of {HOMOPHILY_TARGET}"),
    );
}

// ── criteria 5 + 6: ablation reproduction and attention interpretability ────

fn composition_config() -> SynthConfig {
    SynthConfig {
        images: 300,
        cells_min: 400,
        cells_max: 600,
        num_types: 4,
        biomarker_dim: 6,
        // a confusable pair (differing only along one weak axis) plus two
        // separable background types; per-image batch shifts mask the
        // pooled-mean readout while same-type averaging stays clean
        type_means: Some(vec![
            vec![2.0, 0.35, 0.0, 0.0, 0.0, 0.0],
            vec![2.0, -0.35, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.5],
        ]),
        type_mean_scale: 2.0,
        noise_std: 1.3,
        image_shift_std: 0.12,
        mixing: 1.0,
        width: 1000.0,
        blob_sigma_frac: 0.12,
        type_fracs: Some(vec![0.28, 0.28, 0.22, 0.22]),
        frac_jitter: 0.5,
        groups: 6,
        split_groups: (4, 1, 1),
        size_mean: 50.0,
        size_cv: 0.3,
        tasks: vec![SynthTask {
            name: "comp".into(),
            mechanism: Mechanism::Composition {
                target_type: 0,
                threshold: 0.28,
                spread: 0.1,
                partner_type: Some(1),
                pair_total: Some(0.56),
            },
        }],
    }
}

fn geometry_config() -> SynthConfig {
    SynthConfig {
        images: 300,
        cells_min: 400,
        cells_max: 600,
        num_types: 3,
        biomarker_dim: 6,
        type_means: None,
        type_mean_scale: 2.0,
        noise_std: 0.8,
        image_shift_std: 0.0,
        mixing: 0.7,
        width: 1000.0,
        blob_sigma_frac: 0.12,
        type_fracs: Some(vec![0.3, 0.35, 0.35]),
        frac_jitter: 0.15,
        groups: 6,
        split_groups: (4, 1, 1),
        size_mean: 50.0,
        size_cv: 0.3,
        tasks: vec![SynthTask {
            name: "geom".into(),
            mechanism: Mechanism::Geometry {
                target_type: 0,
                link_distance: 45.0,
                radius_threshold: 120.0,
            },
        }],
    }
}

fn ablation_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.004,
        epochs: 70,
        batch_size: 8,
        hidden_dim: 16,
        hops: 2,
        dropout: 0.0,
        shared_weights: true,
        seed,
        task_weights: BTreeMap::new(),
        selection_metric: "mean".into(),
    }
}

struct AblationResults {
    comp_mew: f64,
    comp_voronoi: f64,
    geom_mew: f64,
    geom_voronoi: f64,
    comp_attention_celltype: f64,
    runtime_secs: f64,
}

fn run_variant_on(
    dataset: &LoadedDataset,
    cache_dir: &std::path::Path,
    index: &CacheIndex,
    variant: Variant,
    cfg: &TrainConfig,
) -> (f64, Option<f64>) {
    let mut data = load_train_dataset(dataset, index, cache_dir).unwrap();
    let options = ModelOptions { variant, ..Default::default() };
    let out = train(&mut data, cfg, &options).unwrap();
    let source = FeatureSource::Cached { index, cache_dir };
    let (report, _) = eval_split(dataset, &source, &out.params, Split::Test, "test").unwrap();
    let value = report.tasks.values().next().unwrap().value;
    (value, report.attention.map(|a| a.celltype_mean))
}

fn ablation_results() -> &'static AblationResults {
    static RESULTS: OnceLock<AblationResults> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let started = Instant::now();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut comp_mew = Vec::new();
        let mut comp_vor = Vec::new();
        let mut comp_attn = Vec::new();
        let mut geom_mew = Vec::new();
        let mut geom_vor = Vec::new();
        for seed in [11u64, 22, 33] {
            for (which, synth) in
                [("comp", composition_config()), ("geom", geometry_config())]
            {
                let dataset = dataset_in_memory(&synth, seed);
                let dir = tempfile::tempdir().unwrap();
                let opts = BuildOptions { hops: 2, seed, ..Default::default() };
                let index = build_caches(&dataset, dir.path(), &opts).unwrap();
                let cfg = ablation_train_config(seed);
                let (mew, attn) =
                    run_variant_on(&dataset, dir.path(), &index, Variant::Attention, &cfg);
                let (vor, _) =
                    run_variant_on(&dataset, dir.path(), &index, Variant::Voronoi, &cfg);
                if which == "comp" {
                    comp_mew.push(mew);
                    comp_vor.push(vor);
                    comp_attn.push(attn.expect("attention variant reports attention"));
                } else {
                    geom_mew.push(mew);
                    geom_vor.push(vor);
                }
            }
        }
        AblationResults {
            comp_mew: mean(&comp_mew),
            comp_voronoi: mean(&comp_vor),
            geom_mew: mean(&geom_mew),
            geom_voronoi: mean(&geom_vor),
            comp_attention_celltype: mean(&comp_attn),
            runtime_secs: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_5_ablation_reproduction() {
    let r = ablation_results();
    assert!(
        r.comp_mew >= 0.85,
        "composition: mean test AUC {:.4} below 0.85",
        r.comp_mew
    );
    assert!(
        r.comp_mew >= r.comp_voronoi + 0.10,
        "composition: attention fusion {:.4} not ≥ voronoi-only {:.4} + 0.10",
        r.comp_mew,
        r.comp_voronoi
    );
    assert!(
        (r.geom_mew - r.geom_voronoi).abs() <= 0.05,
        "geometry: |{:.4} − {:.4}| exceeds 0.05",
        r.geom_mew,
        r.geom_voronoi
    );
    assert!(
        r.runtime_secs < 900.0,
        "ablation grid took {:.0}s, over the 15 min budget",
        r.runtime_secs
    );
    pass(
        "5 (ablation reproduction)",
        format!(
            "composition mew {:.3} vs voronoi {:.3} (gap {:+.3}); geometry mew {:.3} vs voronoi {:.3}; {:.0}s",
            r.comp_mew,
            r.comp_voronoi,
            r.comp_mew - r.comp_voronoi,
            r.geom_mew,
            r.geom_voronoi,
            r.runtime_secs
        ),
    );
}

#[test]
fn criterion_6_attention_interpretability() {
    let r = ablation_results();
    assert!(
        r.comp_attention_celltype > 0.55,
        "mean cell-type attention {:.4} not above 0.55",
        r.comp_attention_celltype
    );
    pass(
        "6 (attention interpretability)",
        format!(
            "mean cell-type attention {:.3} on composition test graphs",
            r.comp_attention_celltype
        ),
    );
}

// ── criterion 7: scalability ────────────────────────────────────────────────

#[test]
fn criterion_7_scalability() {
    let cfg = SynthConfig {
        images: 50,
        cells_min: 9_500,
        cells_max: 10_500,
        num_types: 8,
        biomarker_dim: 39,
        type_means: None,
        type_mean_scale: 2.0,
        noise_std: 1.0,
        image_shift_std: 0.0,
        mixing: 0.8,
        width: 3000.0,
        blob_sigma_frac: 0.1,
        type_fracs: None,
        frac_jitter: 0.2,
        groups: 1,
        split_groups: (0, 0, 1),
        size_mean: 50.0,
        size_cv: 0.3,
        tasks: vec![SynthTask {
            name: "comp".into(),
            mechanism: Mechanism::Composition {
                target_type: 0,
                threshold: 0.125,
                spread: 0.05,
                partner_type: None,
                pair_total: None,
            },
        }],
    };
    let (tables, _) = generate_synthetic(&cfg, 7).unwrap();
    let k = 3;

    // build graphs once; structure preparation is common to both paths
    let graphs: Vec<_> = tables
        .iter()
        .map(|t| {
            let edges = delaunay_adjacency(&t.positions()).unwrap();
            assemble_multiplex(t, edges).unwrap()
        })
        .collect();
    let f = graphs[0].features.cols;
    assert_eq!(f, 40, "39 biomarkers + size");

    // precompute once into cache files
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let pf = precompute_image(g, k, 1000 + i as u64, true).unwrap();
        let path = dir.path().join(format!("img_{i:03}.mewp"));
        mew_core::precompute::cache_write(&pf, &path).unwrap();
        let size = std::fs::metadata(&path).unwrap().len();
        assert_eq!(
            size,
            32 + 2 * (k as u64 + 1) * pf.n as u64 * f as u64 * 4,
            "cache file size must match the header + payload formula exactly"
        );
        paths.push(path);
    }

    let dims = ModelDims {
        f,
        d: 16,
        k,
        shared: true,
        variant: Variant::Attention,
        activation: Activation::Relu,
        pooling: Pooling::Mean,
        dropout: 0.0,
        tasks: vec![TaskHead { name: "comp".into(), kind: TaskKind::Binary }],
    };
    let params = ModelParams::init(dims, 3).unwrap();

    // cached path: read features from disk, run the forward pass
    let t_cached = Instant::now();
    let mut sink = 0.0;
    for path in &paths {
        let pf = cache_read(path).unwrap();
        let trace = full_forward(&pf, &params, Mode::Eval, None).unwrap();
        sink += trace.pooled[0][0];
    }
    let cached_secs = t_cached.elapsed().as_secs_f64();

    // on-the-fly path: recompute the K-hop products per evaluation
    let t_fly = Instant::now();
    for (i, g) in graphs.iter().enumerate() {
        let pf = precompute_image(g, k, 1000 + i as u64, true).unwrap();
        let trace = full_forward(&pf, &params, Mode::Eval, None).unwrap();
        sink += trace.pooled[0][0];
    }
    let fly_secs = t_fly.elapsed().as_secs_f64();
    assert!(sink.is_finite());

    let speedup = fly_secs / cached_secs;
    assert!(
        speedup >= 5.0,
        "cached evaluation only {speedup:.1}× faster ({cached_secs:.2}s vs {fly_secs:.2}s)"
    );
    pass(
        "7 (scalability)",
        format!(
            "50 graphs (~10k nodes, K=3, F=40): cached {cached_secs:.2}s vs on-the-fly {fly_secs:.2}s ({speedup:.1}×)"
        ),
    );
}

// ── criterion 8: sampling statistics ────────────────────────────────────────

#[test]
fn criterion_8_sampling_statistics() {
    assert_eq!(keep_probability(1.0), 0.01, "floor applies at the farthest pair");
    let draws = 10_000usize;
    let mut details = Vec::new();
    for &q in &[0.1f64, 0.5, 0.9, 0.01] {
        let mut r = rng(800 + (q * 1000.0) as u64);
        let mut kept = 0usize;
        for _ in 0..draws {
            let m = sample_with_keep_probs(2, std::iter::once((0u32, 1u32, q)), &mut r).unwrap();
            // retained iff the off-diagonal entries exist (nnz > self-loops)
            if m.nnz() > 2 {
                kept += 1;
            }
        }
        let rate = kept as f64 / draws as f64;
        let half_width = 2.576 * (q * (1.0 - q) / draws as f64).sqrt();
        assert!(
            (rate - q).abs() <= half_width,
            "keep prob {q}: empirical {rate:.4} outside 99% CI ±{half_width:.4}"
        );
        details.push(format!("{q}→{rate:.4}"));
    }
    pass("8 (sampling statistics)", format!("keep rates within 99% CI: {}", details.join(", ")));
}

// ── criterion 9: determinism ────────────────────────────────────────────────

#[test]
fn criterion_9_train_determinism() {
    let synth = SynthConfig {
        images: 24,
        cells_min: 80,
        cells_max: 120,
        num_types: 3,
        biomarker_dim: 4,
        type_means: None,
        type_mean_scale: 2.0,
        noise_std: 1.0,
        image_shift_std: 0.0,
        mixing: 0.6,
        width: 600.0,
        blob_sigma_frac: 0.12,
        type_fracs: None,
        frac_jitter: 0.3,
        groups: 6,
        split_groups: (4, 1, 1),
        size_mean: 40.0,
        size_cv: 0.25,
        tasks: vec![
            SynthTask {
                name: "comp".into(),
                mechanism: Mechanism::Composition {
                    target_type: 0,
                    threshold: 0.3,
                    spread: 0.12,
                    partner_type: None,
                    pair_total: None,
                },
            },
            SynthTask {
                name: "surv".into(),
                mechanism: Mechanism::Hazard {
                    target_type: 0,
                    base_rate: 0.3,
                    rate_slope: 2.0,
                    censor_horizon: 8.0,
                },
            },
        ],
    };
    let run = || {
        let dataset = dataset_in_memory(&synth, 77);
        let dir = tempfile::tempdir().unwrap();
        let opts = BuildOptions { hops: 2, seed: 5, ..Default::default() };
        let index = build_caches(&dataset, dir.path(), &opts).unwrap();
        let mut data = load_train_dataset(&dataset, &index, dir.path()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.005,
            epochs: 25,
            batch_size: 8,
            hidden_dim: 12,
            hops: 2,
            dropout: 0.25,
            shared_weights: true,
            seed: 9,
            task_weights: BTreeMap::new(),
            selection_metric: "mean".into(),
        };
        let out = train(&mut data, &cfg, &ModelOptions::default()).unwrap();
        // serialize the checkpoint to bytes for a bit-level comparison
        let ckpt = dir.path().join("ckpt.mew");
        let meta = mew_core::model::CheckpointMeta {
            tool_version: "acceptance".into(),
            dims: out.params.dims.clone(),
            precompute: mew_core::model::PrecomputeMeta {
                hops: 2,
                seed: 5,
                stochastic: true,
                resample_each_epoch: false,
            },
            standardize: index.standardize.clone(),
            selection: None,
        };
        mew_core::model::save_checkpoint(&out.params, &meta, &ckpt).unwrap();
        (std::fs::read(&ckpt).unwrap(), out.history.to_csv())
    };
    let (ckpt_a, hist_a) = run();
    let (ckpt_b, hist_b) = run();
    assert_eq!(ckpt_a, ckpt_b, "checkpoint bytes differ between identical runs");
    assert_eq!(hist_a, hist_b, "history differs between identical runs");
    pass(
        "9 (determinism)",
        format!("two runs: {} checkpoint bytes and {} history bytes identical", ckpt_a.len(), hist_a.len()),
    );
}

// ── criterion 10: degenerate inputs ─────────────────────────────────────────

#[test]
fn criterion_10_degenerate_inputs() {
    let mut r = rng(10);

    // single-type image: the cell-type layer is a complete graph
    let n = 40;
    let table = mew_core::cell_data::CellTable {
        image_id: "single".into(),
        biomarker_names: vec!["b0".into(), "b1".into()],
        cells: (0..n)
            .map(|i| mew_core::cell_data::Cell {
                cell_id: i as u64,
                x: r.random::<f64>() * 300.0,
                y: r.random::<f64>() * 300.0,
                size: 1.0,
                biomarkers: vec![r.random(), r.random()],
                cell_type: Some("only".into()),
            })
            .collect(),
    };
    let edges = delaunay_adjacency(&table.positions()).unwrap();
    let g = assemble_multiplex(&table, edges).unwrap();
    assert_eq!(g.pairs.count(), (n as u64) * (n as u64 - 1) / 2);
    let pf = precompute_image(&g, 2, 1, true).unwrap();
    assert_eq!(pf.celltype_hops.len(), 3);

    // all-distinct-types image: empty cell-type layer degrades to self-loops
    let mut distinct = table.clone();
    for (i, c) in distinct.cells.iter_mut().enumerate() {
        c.cell_type = Some(format!("t{i}"));
    }
    let edges = delaunay_adjacency(&distinct.positions()).unwrap();
    let g2 = assemble_multiplex(&distinct, edges).unwrap();
    assert!(g2.pairs.is_empty());
    let pf2 = precompute_image(&g2, 2, 1, true).unwrap();
    for hop in 0..=2 {
        assert_eq!(pf2.celltype_hops[hop], g2.features, "self-loop-only hops equal X");
    }
    let dims = ModelDims {
        f: 3,
        d: 4,
        k: 2,
        shared: true,
        variant: Variant::Attention,
        activation: Activation::Relu,
        pooling: Pooling::Mean,
        dropout: 0.0,
        tasks: vec![TaskHead { name: "cls".into(), kind: TaskKind::Binary }],
    };
    let params = ModelParams::init(dims, 2).unwrap();
    let trace = full_forward(&pf2, &params, Mode::Eval, None).unwrap();
    assert!(trace.pooled[0].iter().all(|v| v.is_finite()));

    // collinear points are rejected, not mis-triangulated
    let collinear: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
    assert!(matches!(
        delaunay_adjacency(&collinear),
        Err(Error::DegenerateInput { .. })
    ));

    // all-censored hazard batch: the loss reports NoEvents and training
    // skips the contribution without crashing
    assert!(matches!(
        cox_loss(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0], &[0, 0, 0]),
        Err(Error::NoEvents)
    ));
    let mut data = TrainDataset {
        tasks: vec![
            TaskSpec { name: "cls".into(), kind: TaskKind::Binary },
            TaskSpec { name: "surv".into(), kind: TaskKind::Hazard },
        ],
        train: (0..6)
            .map(|i| mew_core::training::TrainGraph {
                image_id: format!("g{i}"),
                pf: random_instance(20, 2, 2, 500 + i),
                labels: BTreeMap::from([
                    ("cls".to_string(), Label::Binary((i % 2) as u8)),
                    ("surv".to_string(), Label::Hazard { time: 1.0 + i as f64, event: 0 }),
                ]),
                graph: None,
            })
            .collect(),
        val: Vec::new(),
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 2,
        batch_size: 4,
        hidden_dim: 6,
        hops: 3,
        dropout: 0.0,
        shared_weights: true,
        seed: 1,
        task_weights: BTreeMap::new(),
        selection_metric: "mean".into(),
    };
    train(&mut data, &cfg, &ModelOptions::default()).unwrap();

    pass(
        "10 (degenerate inputs)",
        "clique layer, empty layer, collinear rejection, all-censored batch all per contract"
            .to_string(),
    );
}
