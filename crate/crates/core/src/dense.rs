//! Row-major dense matrices in f64.
//!
//! Small hand-rolled kernel set: everything the forward/backward passes need,
//! nothing more. Loop order is chosen so inner loops run over contiguous rows.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape does not match buffer length");
        Dense { rows, cols, data }
    }

    /// Build from nested rows; rows must be equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Dense { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max_abs_diff(&self, other: &Dense) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// out = a (m×k) · b (k×n). Checks shapes.
pub fn matmul(a: &Dense, b: &Dense) -> Result<Dense> {
    if a.cols != b.rows {
        return Err(Error::DimMismatch {
            expected: format!("inner dims equal ({}x{} · {}x{})", a.rows, a.cols, b.rows, b.cols),
            got: format!("{} vs {}", a.cols, b.rows),
        });
    }
    let mut out = Dense::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

/// out += a · b with raw slices; shapes are the caller's responsibility.
pub fn matmul_acc_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

fn matmul_into(a: &Dense, b: &Dense, out: &mut Dense) {
    matmul_acc_raw(&a.data, a.rows, a.cols, &b.data, b.cols, &mut out.data);
}

/// out += aᵀ (k×m from a m×k) · b (m×n). Used for weight gradients Xᵀ·dY.
pub fn matmul_at_b_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out += a (m×n) · bᵀ (n×k from b k×n). Used for input gradients dY·Wᵀ.
pub fn matmul_a_bt_acc(a: &[f64], m: usize, n: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (p, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Add a bias row to every row of `m`.
pub fn add_row_bias(m: &mut Dense, bias: &[f64]) {
    debug_assert_eq!(m.cols, bias.len());
    for i in 0..m.rows {
        for (v, &b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums accumulated into `out`. Used for bias gradients.
pub fn col_sums_acc(m: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(out.len(), cols);
    for i in 0..rows {
        for (o, &v) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *o += v;
        }
    }
}
