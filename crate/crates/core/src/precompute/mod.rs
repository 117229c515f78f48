//! K-hop feature precomputation with stochastic edge sampling.
//!
//! For each image the Voronoi layer contributes the exact multi-hop products
//! [X, ÂX, Â²X, ..., Â^K X]; the cell-type layer is re-sampled per hop with
//! per-pair keep-probabilities decreasing in normalized centroid distance,
//! so its hop k applies k independently sampled normalized adjacencies
//! cumulatively. Everything here is independent of training state.

mod cache;
mod sparse;

pub use cache::{
    cache_read, cache_write, fnv1a64, fnv1a64_file, CacheEntry, CacheIndex, Standardization,
};
pub use sparse::{normalize_adjacency, spmm, SparseMatrix};

use crate::dense::Dense;
use crate::error::Result;
use crate::geometry::{euclid, keep_probability};
use crate::multiplex::{CelltypePairs, MultiplexGraph};
use crate::rng::{self, derive_seed};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Above this many same-type pairs per image the unsampled cell-type layer
/// switches to the closed-form per-type mean operator instead of
/// materializing clique edges.
pub const PAIR_MATERIALIZE_CAP: u64 = 2_000_000;

/// Per-branch K-hop matrices. Entry 0 of both branches is the shared X.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedFeatures {
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub resample_each_epoch: bool,
    pub voronoi_hops: Vec<Dense>,
    pub celltype_hops: Vec<Dense>,
}

/// Bernoulli-sample a pair stream and return the normalized adjacency of the
/// retained (symmetrized) edge set. Consumes one uniform draw per pair in
/// stream order, so results are deterministic for a fixed rng state.
pub fn sample_with_keep_probs(
    n: usize,
    pairs: impl Iterator<Item = (u32, u32, f64)>,
    rng: &mut ChaCha12Rng,
) -> Result<SparseMatrix> {
    let mut retained: Vec<(u32, u32)> = Vec::new();
    for (i, j, keep) in pairs {
        debug_assert!((0.0..=1.0).contains(&keep));
        if rng.random::<f64>() < keep {
            retained.push((i, j));
        }
    }
    normalize_adjacency(n, &retained)
}

/// Largest centroid distance over the same-type pair stream; None when the
/// layer has no pairs. This is the normalization constant for sampling.
pub fn celltype_pair_dmax(pairs: &CelltypePairs, positions: &[(f64, f64)]) -> Option<f64> {
    let mut d_max: f64 = 0.0;
    let mut any = false;
    for (i, j) in pairs.iter() {
        any = true;
        d_max = d_max.max(euclid(positions[i as usize], positions[j as usize]));
    }
    if any && d_max > 0.0 {
        Some(d_max)
    } else {
        None
    }
}

/// Sample the cell-type layer once: keep each same-type pair with
/// probability `max(1 - d/d_max, floor)` and normalize the result.
pub fn sample_celltype_adjacency(
    n: usize,
    pairs: &CelltypePairs,
    positions: &[(f64, f64)],
    d_max: f64,
    rng: &mut ChaCha12Rng,
) -> Result<SparseMatrix> {
    let stream = pairs.iter().map(|(i, j)| {
        let d = euclid(positions[i as usize], positions[j as usize]);
        (i, j, keep_probability(d / d_max))
    });
    sample_with_keep_probs(n, stream, rng)
}

/// Per-type mean aggregation: the closed form of the unsampled normalized
/// cell-type layer (each type block is an all-ones matrix scaled by 1/m).
fn celltype_mean_hop(prev: &Dense, pairs: &CelltypePairs) -> Dense {
    let f = prev.cols;
    let mut out = prev.clone();
    for group in pairs.groups() {
        if group.len() < 2 {
            continue;
        }
        let mut mean = vec![0.0f64; f];
        for &i in group {
            for (m, &v) in mean.iter_mut().zip(prev.row(i as usize)) {
                *m += v;
            }
        }
        let inv = 1.0 / group.len() as f64;
        for m in &mut mean {
            *m *= inv;
        }
        for &i in group {
            out.row_mut(i as usize).copy_from_slice(&mean);
        }
    }
    out
}

fn precompute_with_cap(
    g: &MultiplexGraph,
    k: usize,
    seed: u64,
    stochastic: bool,
    pair_cap: u64,
) -> Result<PrecomputedFeatures> {
    let n = g.n;
    let x = g.features.clone();

    let adj_v = normalize_adjacency(n, &g.voronoi.pairs().collect::<Vec<_>>())?;
    let mut voronoi_hops = Vec::with_capacity(k + 1);
    voronoi_hops.push(x.clone());
    for h in 1..=k {
        let next = spmm(&adj_v, &voronoi_hops[h - 1])?;
        voronoi_hops.push(next);
    }

    let mut celltype_hops = Vec::with_capacity(k + 1);
    celltype_hops.push(x);
    let d_max = celltype_pair_dmax(&g.pairs, &g.positions);
    if stochastic && d_max.is_some() {
        let d_max = d_max.unwrap();
        for h in 1..=k {
            let mut hop_rng = rng::stream(seed, derive_seed(0x5A3D_7E00, h as u64));
            let adj = sample_celltype_adjacency(n, &g.pairs, &g.positions, d_max, &mut hop_rng)?;
            let next = spmm(&adj, &celltype_hops[h - 1])?;
            celltype_hops.push(next);
        }
    } else if !stochastic && g.pairs.count() > pair_cap {
        for h in 1..=k {
            let next = celltype_mean_hop(&celltype_hops[h - 1], &g.pairs);
            celltype_hops.push(next);
        }
    } else {
        // small enough to materialize, or no pairs at all (self-loops only)
        let adj = normalize_adjacency(n, &g.pairs.iter().collect::<Vec<_>>())?;
        for h in 1..=k {
            let next = spmm(&adj, &celltype_hops[h - 1])?;
            celltype_hops.push(next);
        }
    }

    Ok(PrecomputedFeatures {
        n,
        f: g.features.cols,
        k,
        seed,
        stochastic,
        resample_each_epoch: false,
        voronoi_hops,
        celltype_hops,
    })
}

/// Precompute both branches' hop matrices for one image.
///
/// With `stochastic` set, the cell-type adjacency is freshly sampled for each
/// hop from the per-hop derived stream of `seed`; otherwise the full (or
/// closed-form) clique layer is used. Fully deterministic for fixed inputs.
pub fn precompute_image(
    g: &MultiplexGraph,
    k: usize,
    seed: u64,
    stochastic: bool,
) -> Result<PrecomputedFeatures> {
    if k == 0 {
        return Err(crate::error::Error::InvalidConfig { reason: "hops K must be >= 1".into() });
    }
    precompute_with_cap(g, k, seed, stochastic, PAIR_MATERIALIZE_CAP)
}

/// Re-sample only the cell-type hop matrices (used by per-epoch resampling).
/// Voronoi hops are untouched; hop h uses the stream derived from
/// `(seed, epoch, h)`.
pub fn resample_celltype_hops(
    pf: &mut PrecomputedFeatures,
    g: &MultiplexGraph,
    epoch: u64,
) -> Result<()> {
    let Some(d_max) = celltype_pair_dmax(&g.pairs, &g.positions) else {
        return Ok(());
    };
    let n = g.n;
    for h in 1..=pf.k {
        let tag = derive_seed(0x5A3D_7E00, derive_seed(epoch.wrapping_add(1), h as u64));
        let mut hop_rng = rng::stream(pf.seed, tag);
        let adj = sample_celltype_adjacency(n, &g.pairs, &g.positions, d_max, &mut hop_rng)?;
        pf.celltype_hops[h] = spmm(&adj, &pf.celltype_hops[h - 1])?;
    }
    Ok(())
}
