//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! Points are inserted in Morton order with walk-based point location.
//! A super-triangle bounds the insertion; exact co-circularity (determinant
//! exactly zero, which covers grid-aligned inputs) is resolved by a symbolic
//! tie rule: the lowest-index point wins. A final Lawson pass re-checks the
//! Delaunay condition on edges between real points, which removes any
//! influence of the finite super-triangle near the hull.

use super::{euclid, Edge, EdgeList};
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Points closer than this (in the input coordinate unit) are duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

const NO_NBR: u32 = u32::MAX;

#[derive(Clone)]
struct Tri {
    v: [u32; 3],
    nbr: [u32; 3], // nbr[i] is across the edge opposite v[i]
    alive: bool,
}

/// Signed double area of (a, b, c); positive when counter-clockwise.
#[inline]
fn orient2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Lifted-determinant incircle test. For a CCW triangle (a, b, c) the result
/// is positive iff d lies strictly inside the circumcircle.
#[inline]
fn incircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let adx = a.0 - d.0;
    let ady = a.1 - d.1;
    let bdx = b.0 - d.0;
    let bdy = b.1 - d.1;
    let cdx = c.0 - d.0;
    let cdy = c.1 - d.1;
    let ad2 = adx * adx + ady * ady;
    let bd2 = bdx * bdx + bdy * bdy;
    let cd2 = cdx * cdx + cdy * cdy;
    adx * (bdy * cd2 - bd2 * cdy) - ady * (bdx * cd2 - bd2 * cdx) + ad2 * (bdx * cdy - bdy * cdx)
}

struct Triangulation {
    pts: Vec<(f64, f64)>,
    tris: Vec<Tri>,
    n_real: usize,
    last: u32,
}

impl Triangulation {
    fn point(&self, i: u32) -> (f64, f64) {
        self.pts[i as usize]
    }

    /// Incircle with the symbolic tie rule for exact co-circularity.
    fn breaks_into(&self, t: &Tri, p: u32) -> bool {
        let det = incircle(self.point(t.v[0]), self.point(t.v[1]), self.point(t.v[2]), self.point(p));
        if det > 0.0 {
            return true;
        }
        if det < 0.0 {
            return false;
        }
        p < t.v.iter().copied().min().unwrap()
    }

    /// Walk toward the triangle containing p; falls back to a scan if the
    /// walk fails to terminate.
    fn locate(&self, p: (f64, f64)) -> u32 {
        let limit = 4 * self.tris.len() + 64;
        let mut cur = self.last;
        let mut steps = 0;
        'walk: loop {
            steps += 1;
            if steps > limit {
                return self.locate_scan(p);
            }
            let t = &self.tris[cur as usize];
            for e in 0..3 {
                let u = t.v[(e + 1) % 3];
                let w = t.v[(e + 2) % 3];
                if orient2d(self.point(u), self.point(w), p) < 0.0 {
                    if t.nbr[e] == NO_NBR {
                        return self.locate_scan(p);
                    }
                    cur = t.nbr[e];
                    continue 'walk;
                }
            }
            return cur;
        }
    }

    fn locate_scan(&self, p: (f64, f64)) -> u32 {
        for (idx, t) in self.tris.iter().enumerate() {
            if !t.alive {
                continue;
            }
            let inside = (0..3).all(|e| {
                let u = t.v[(e + 1) % 3];
                let w = t.v[(e + 2) % 3];
                orient2d(self.point(u), self.point(w), p) >= 0.0
            });
            if inside {
                return idx as u32;
            }
        }
        unreachable!("point not covered by any triangle; super-triangle too small");
    }

    fn insert(&mut self, p: u32) {
        let seed = self.locate(self.point(p));

        // Grow the cavity of triangles whose circumcircle admits p.
        let mut bad = vec![seed];
        let mut in_bad = vec![false; self.tris.len()];
        in_bad[seed as usize] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(ti) = queue.pop_front() {
            for e in 0..3 {
                let nb = self.tris[ti as usize].nbr[e];
                if nb == NO_NBR || in_bad[nb as usize] {
                    continue;
                }
                if self.breaks_into(&self.tris[nb as usize], p) {
                    in_bad[nb as usize] = true;
                    bad.push(nb);
                    queue.push_back(nb);
                }
            }
        }

        // Boundary edges of the cavity, directed CCW around it.
        let mut boundary: Vec<(u32, u32, u32)> = Vec::new();
        for &ti in &bad {
            let t = self.tris[ti as usize].clone();
            for e in 0..3 {
                let nb = t.nbr[e];
                if nb == NO_NBR || !in_bad[nb as usize] {
                    boundary.push((t.v[(e + 1) % 3], t.v[(e + 2) % 3], nb));
                }
            }
        }
        for &ti in &bad {
            self.tris[ti as usize].alive = false;
        }

        // Fan p to each boundary edge; stitch adjacency via directed edges.
        let mut edge_owner: Vec<(u32, u32, u32)> = Vec::with_capacity(2 * boundary.len());
        let mut created = Vec::with_capacity(boundary.len());
        for &(u, w, outer) in &boundary {
            let idx = self.tris.len() as u32;
            self.tris.push(Tri { v: [p, u, w], nbr: [outer, NO_NBR, NO_NBR], alive: true });
            if outer != NO_NBR {
                let o = &mut self.tris[outer as usize];
                for e in 0..3 {
                    if (o.v[(e + 1) % 3], o.v[(e + 2) % 3]) == (w, u) {
                        o.nbr[e] = idx;
                    }
                }
            }
            // edge (w, p) is opposite v[1]=u; edge (p, u) is opposite v[2]=w
            edge_owner.push((w, p, idx << 2 | 1));
            edge_owner.push((p, u, idx << 2 | 2));
            created.push(idx);
        }
        edge_owner.sort_unstable();
        for &(a, b, packed) in &edge_owner {
            let (idx, e) = (packed >> 2, (packed & 3) as usize);
            if let Ok(pos) = edge_owner.binary_search_by(|probe| (probe.0, probe.1).cmp(&(b, a))) {
                self.tris[idx as usize].nbr[e] = edge_owner[pos].2 >> 2;
            }
        }
        self.last = *created.last().expect("cavity produced no boundary");
    }

    /// Lawson pass over edges whose four incident vertices are all real.
    fn legalize_real(&mut self) {
        let mut queue: VecDeque<(u32, usize)> = VecDeque::new();
        for (idx, t) in self.tris.iter().enumerate() {
            if !t.alive {
                continue;
            }
            for e in 0..3 {
                if t.nbr[e] != NO_NBR {
                    queue.push_back((idx as u32, e));
                }
            }
        }
        let mut guard = 0usize;
        let cap = 64 * self.tris.len() + 1024;
        while let Some((ti, e)) = queue.pop_front() {
            guard += 1;
            if guard > cap {
                break; // co-circular churn guard; strict flips terminate long before this
            }
            let t = self.tris[ti as usize].clone();
            if !t.alive || t.nbr[e] == NO_NBR {
                continue;
            }
            let si = t.nbr[e];
            let s = self.tris[si as usize].clone();
            if !s.alive {
                continue;
            }
            let p = t.v[e];
            let u = t.v[(e + 1) % 3];
            let w = t.v[(e + 2) % 3];
            let Some(es) = (0..3).find(|&k| s.nbr[k] == ti) else { continue };
            let q = s.v[es];
            let all_real = [p, u, w, q].iter().all(|&x| (x as usize) < self.n_real);
            if !all_real {
                continue;
            }
            if incircle(self.point(p), self.point(u), self.point(w), self.point(q)) <= 0.0 {
                continue;
            }
            // Flip diagonal (u, w) to (p, q): t := (p, u, q), s := (q, w, p).
            let tn_pu = t.nbr[(e + 2) % 3];
            let tn_wp = t.nbr[(e + 1) % 3];
            let sn_uq = s.nbr[(0..3).find(|&k| s.v[k] == w).unwrap()];
            let sn_qw = s.nbr[(0..3).find(|&k| s.v[k] == u).unwrap()];
            self.tris[ti as usize] = Tri { v: [p, u, q], nbr: [sn_uq, si, tn_pu], alive: true };
            self.tris[si as usize] = Tri { v: [q, w, p], nbr: [tn_wp, ti, sn_qw], alive: true };
            // Rewire outer neighbors by matching the shared (reversed) edge.
            for (nb, edge, owner) in
                [(sn_uq, (u, q), ti), (tn_pu, (p, u), ti), (tn_wp, (w, p), si), (sn_qw, (q, w), si)]
            {
                if nb != NO_NBR {
                    let o = &mut self.tris[nb as usize];
                    for k in 0..3 {
                        if (o.v[(k + 1) % 3], o.v[(k + 2) % 3]) == (edge.1, edge.0) {
                            o.nbr[k] = owner;
                        }
                    }
                }
            }
            for x in 0..3 {
                queue.push_back((ti, x));
                queue.push_back((si, x));
            }
        }
    }
}

fn reject_duplicates(points: &[(f64, f64)]) -> Result<()> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_unstable_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    for w in 0..order.len() {
        let i = order[w];
        for &j in order[w + 1..].iter() {
            if points[j].0 - points[i].0 > DUPLICATE_TOLERANCE {
                break;
            }
            if euclid(points[i], points[j]) <= DUPLICATE_TOLERANCE {
                return Err(Error::DegenerateInput {
                    reason: format!("duplicate points at indices {} and {}", i.min(j), i.max(j)),
                });
            }
        }
    }
    Ok(())
}

/// Delaunay neighbor edges for a set of 2D centroids.
///
/// Returns the undirected edge set (canonical `i < j`) with Euclidean
/// distances. Fewer than three points, all-collinear input, and duplicate
/// points (within [`DUPLICATE_TOLERANCE`]) are rejected.
pub fn delaunay_adjacency(points: &[(f64, f64)]) -> Result<EdgeList> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput { reason: format!("need at least 3 points, got {n}") });
    }
    for (idx, p) in points.iter().enumerate() {
        if !p.0.is_finite() || !p.1.is_finite() {
            return Err(Error::DegenerateInput { reason: format!("non-finite coordinate at index {idx}") });
        }
    }
    reject_duplicates(points)?;
    if !(2..n).any(|k| orient2d(points[0], points[1], points[k]) != 0.0) {
        return Err(Error::DegenerateInput { reason: "all points are collinear".into() });
    }

    // Bounding box and a comfortably oversized super-triangle.
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1.0);
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    // 2^20 keeps super-vertex circumcircle interference out of reach of any
    // non-adversarial input while staying exactly representable.
    let m = 1_048_576.0 * span;
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.push((cx - m, cy - m));
    pts.push((cx + m, cy - m));
    pts.push((cx, cy + m));
    let sv = [n as u32, n as u32 + 1, n as u32 + 2];

    let root = Tri { v: sv, nbr: [NO_NBR; 3], alive: true };
    let mut tr = Triangulation { pts, tris: vec![root], n_real: n, last: 0 };

    // Morton-order insertion keeps successive walks short.
    let mut order: Vec<u32> = (0..n as u32).collect();
    let scale = 65535.0;
    let key = |i: &u32| -> u64 {
        let (x, y) = points[*i as usize];
        let qx = (((x - x0) / span) * scale) as u64;
        let qy = (((y - y0) / span) * scale) as u64;
        let mut z = 0u64;
        for b in 0..16 {
            z |= ((qx >> b) & 1) << (2 * b) | ((qy >> b) & 1) << (2 * b + 1);
        }
        z
    };
    order.sort_by_key(key);
    for p in order {
        tr.insert(p);
    }
    tr.legalize_real();

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for t in tr.tris.iter().filter(|t| t.alive) {
        for e in 0..3 {
            let a = t.v[(e + 1) % 3];
            let b = t.v[(e + 2) % 3];
            if (a as usize) < n && (b as usize) < n && a < b {
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge { i, j, dist: euclid(points[i as usize], points[j as usize]) })
        .collect();
    Ok(EdgeList::new(n, edges))
}
