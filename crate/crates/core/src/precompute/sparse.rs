//! Compressed-row sparse matrices.

use crate::dense::Dense;
use crate::error::{Error, Result};

/// Square CSR matrix. Column indices are sorted within each row and no
/// explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }
}

/// Symmetrically normalized adjacency with self-loops from an undirected
/// pair set: with Â = A + I and D = rowsum(Â), returns D^{-1/2}·Â·D^{-1/2}.
///
/// `pairs` must list each undirected edge once with both endpoints `< n`;
/// self-pairs are rejected by construction upstream and duplicates are the
/// caller's responsibility.
pub fn normalize_adjacency(n: usize, pairs: &[(u32, u32)]) -> Result<SparseMatrix> {
    // degree includes the self-loop
    let mut degree = vec![1u32; n];
    for &(i, j) in pairs {
        if i as usize >= n {
            return Err(Error::IndexOutOfRange { index: i as usize, n });
        }
        if j as usize >= n {
            return Err(Error::IndexOutOfRange { index: j as usize, n });
        }
        degree[i as usize] += 1;
        degree[j as usize] += 1;
    }

    let nnz = n + 2 * pairs.len();
    let mut row_offsets = vec![0usize; n + 1];
    for i in 0..n {
        row_offsets[i + 1] = row_offsets[i] + degree[i] as usize;
    }
    let mut col_indices = vec![0u32; nnz];
    let mut values = vec![0.0f64; nnz];
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();

    let mut cursor = row_offsets.clone();
    let mut push = |r: usize, c: u32, v: f64, cursor: &mut Vec<usize>| {
        col_indices[cursor[r]] = c;
        values[cursor[r]] = v;
        cursor[r] += 1;
    };
    for i in 0..n {
        push(i, i as u32, inv_sqrt[i] * inv_sqrt[i], &mut cursor);
    }
    for &(i, j) in pairs {
        let v = inv_sqrt[i as usize] * inv_sqrt[j as usize];
        push(i as usize, j, v, &mut cursor);
        push(j as usize, i, v, &mut cursor);
    }

    // sort each row by column index
    let mut m = SparseMatrix { n, row_offsets, col_indices, values };
    let mut scratch: Vec<(u32, f64)> = Vec::new();
    for i in 0..n {
        let span = m.row_offsets[i]..m.row_offsets[i + 1];
        scratch.clear();
        scratch.extend(m.col_indices[span.clone()].iter().copied().zip(m.values[span.clone()].iter().copied()));
        scratch.sort_unstable_by_key(|&(c, _)| c);
        for (k, &(c, v)) in scratch.iter().enumerate() {
            m.col_indices[span.start + k] = c;
            m.values[span.start + k] = v;
        }
    }
    Ok(m)
}

/// Sparse × dense product with f64 accumulation.
pub fn spmm(a: &SparseMatrix, x: &Dense) -> Result<Dense> {
    if a.n != x.rows {
        return Err(Error::DimMismatch {
            expected: format!("{}×F dense operand", a.n),
            got: format!("{}×{}", x.rows, x.cols),
        });
    }
    let f = x.cols;
    let mut out = Dense::zeros(a.n, f);
    for i in 0..a.n {
        let (cols, vals) = a.row(i);
        let out_row = &mut out.data[i * f..(i + 1) * f];
        for (&c, &v) in cols.iter().zip(vals) {
            let x_row = &x.data[c as usize * f..(c as usize + 1) * f];
            for (o, &xv) in out_row.iter_mut().zip(x_row) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}
