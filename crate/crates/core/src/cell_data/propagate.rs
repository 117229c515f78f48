//! Label propagation over the Voronoi adjacency for partially typed tables.

use super::table::CellTable;
use crate::error::{Error, Result};
use crate::geometry::EdgeList;

/// Propagate known cell types to unlabeled cells.
///
/// Iterates `Y ← P·Y` where P is the row-normalized Voronoi adjacency,
/// clamping seed rows to their one-hot labels each round, until the largest
/// entry change falls below `tol` or `max_iter` rounds have run. Unlabeled
/// cells then take the argmax of their propagated distribution, ties broken
/// by the smallest label index (label indices follow first appearance in
/// table order). Seed labels are never altered.
pub fn propagate_labels(
    table: &CellTable,
    voronoi: &EdgeList,
    max_iter: usize,
    tol: f64,
) -> Result<CellTable> {
    let n = table.len();
    if voronoi.n != n {
        return Err(Error::DimMismatch {
            expected: format!("edge list over {n} nodes"),
            got: format!("{}", voronoi.n),
        });
    }
    if !table.any_typed() {
        return Err(Error::NoSeedLabels);
    }
    if table.fully_typed() {
        return Ok(table.clone());
    }

    // label vocabulary in first-appearance order
    let mut names: Vec<String> = Vec::new();
    let mut seed_of: Vec<Option<usize>> = Vec::with_capacity(n);
    for cell in &table.cells {
        match &cell.cell_type {
            Some(t) => {
                let idx = match names.iter().position(|x| x == t) {
                    Some(i) => i,
                    None => {
                        names.push(t.clone());
                        names.len() - 1
                    }
                };
                seed_of.push(Some(idx));
            }
            None => seed_of.push(None),
        }
    }
    let l = names.len();

    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, j) in voronoi.pairs() {
        neighbors[i as usize].push(j);
        neighbors[j as usize].push(i);
    }

    let mut y = vec![0.0f64; n * l];
    for (i, s) in seed_of.iter().enumerate() {
        if let Some(c) = s {
            y[i * l + c] = 1.0;
        }
    }

    for _ in 0..max_iter {
        let mut next = vec![0.0f64; n * l];
        for i in 0..n {
            if let Some(c) = seed_of[i] {
                next[i * l + c] = 1.0;
                continue;
            }
            let nbrs = &neighbors[i];
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            for &j in nbrs {
                for c in 0..l {
                    next[i * l + c] += inv * y[j as usize * l + c];
                }
            }
        }
        let delta = y
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        y = next;
        if delta <= tol {
            break;
        }
    }

    let mut out = table.clone();
    for (i, cell) in out.cells.iter_mut().enumerate() {
        if seed_of[i].is_none() {
            let row = &y[i * l..(i + 1) * l];
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            cell.cell_type = Some(names[best].clone());
        }
    }
    Ok(out)
}
