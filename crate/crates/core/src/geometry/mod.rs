//! Voronoi-adjacency geometry: Delaunay neighbor edges and distance
//! normalization for the edge sampler.

mod delaunay;

pub use delaunay::delaunay_adjacency;

use crate::error::{Error, Result};

/// Floor applied to keep-probabilities so the farthest pair is never
/// deterministically excluded.
pub const KEEP_PROB_FLOOR: f64 = 0.01;

/// Undirected edge with canonical `i < j` ordering and centroid distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub dist: f64,
}

/// Undirected edge set over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn new(n: usize, edges: Vec<Edge>) -> Self {
        EdgeList { n, edges }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.i, e.j))
    }
}

/// Per-edge distances scaled into [0, 1] by the maximum distance of the list.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDistances {
    pub p: Vec<f64>,
    pub d_max: f64,
}

/// Scale each edge distance by the largest distance in the list.
///
/// The largest edge maps to exactly 1; sampling keeps an edge with
/// probability `1 - p` (floored, see [`keep_probability`]).
pub fn normalize_distances(edges: &EdgeList) -> Result<NormalizedDistances> {
    if edges.is_empty() {
        return Err(Error::EmptyEdgeList);
    }
    let d_max = edges.edges.iter().map(|e| e.dist).fold(0.0, f64::max);
    if d_max <= 0.0 {
        return Err(Error::DegenerateInput { reason: "all edge distances are zero".into() });
    }
    let p = edges.edges.iter().map(|e| e.dist / d_max).collect();
    Ok(NormalizedDistances { p, d_max })
}

/// Keep-probability for a normalized distance: `max(1 - p, floor)`.
#[inline]
pub fn keep_probability(p: f64) -> f64 {
    (1.0 - p).max(KEEP_PROB_FLOOR)
}

pub(crate) fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}
