//! Row-major dense kernels used by the SVD backends.
//!
//! Products are parallelised over independent output blocks with fixed boundaries, so
//! results do not depend on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::preprocess::FeatureMatrix;

const COL_BLOCK: usize = 256;

/// Row-major `rows×cols` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Dense { rows, cols, data }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Dense {
        let mut out = Dense::zeros(self.rows, k);
        for i in 0..self.rows {
            out.data[i * k..(i + 1) * k].copy_from_slice(&self.row(i)[..k]);
        }
        out
    }
}

/// `x · b` where `b` is `x.cols × b.cols`.
pub fn mul(x: &FeatureMatrix, b: &Dense) -> Dense {
    assert_eq!(x.cols, b.rows, "inner dimensions differ");
    let l = b.cols;
    let mut out = Dense::zeros(x.rows, l);
    if l == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(l)
        .enumerate()
        .for_each(|(i, out_row)| {
            for (d, &xv) in x.row(i).iter().enumerate() {
                if xv != 0.0 {
                    let b_row = &b.data[d * l..(d + 1) * l];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += xv * bv;
                    }
                }
            }
        });
    out
}

/// `xᵀ · q` where `q` is `x.rows × q.cols`.
pub fn mul_transpose(x: &FeatureMatrix, q: &Dense) -> Dense {
    assert_eq!(x.rows, q.rows, "row counts differ");
    let l = q.cols;
    let mut out = Dense::zeros(x.cols, l);
    if l == 0 || x.cols == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(COL_BLOCK * l)
        .enumerate()
        .for_each(|(block, out_block)| {
            let c0 = block * COL_BLOCK;
            let width = out_block.len() / l;
            for i in 0..x.rows {
                let x_seg = &x.row(i)[c0..c0 + width];
                let q_row = q.row(i);
                for (dd, &xv) in x_seg.iter().enumerate() {
                    if xv != 0.0 {
                        let o = &mut out_block[dd * l..(dd + 1) * l];
                        for (ov, &qv) in o.iter_mut().zip(q_row) {
                            *ov += xv * qv;
                        }
                    }
                }
            }
        });
    out
}

/// Orthonormal basis for the column space of `a` (thin Householder Q).
pub fn orthonormalize(a: &Dense) -> Dense {
    let qr = a.to_nalgebra().qr();
    Dense::from_nalgebra(&qr.q())
}

/// Thin SVD of a tall matrix (`rows ≥ cols`) via QR followed by an SVD of the square
/// factor. Singular values are returned in non-increasing order.
pub fn thin_svd_tall(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    assert!(rows >= cols, "thin_svd_tall needs rows ≥ cols");
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, true);
    let u_small = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(cols, cols, |i, j| u_small[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(cols, cols, |i, j| v_t[(order[j], i)]);
    (q * u_sorted, sigma, v_sorted)
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
/// Returns the applied signs.
pub fn canonical_signs(m: &mut DMatrix<f64>) -> Vec<f64> {
    let mut signs = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v.abs() > best {
                best = v.abs();
                sign = if v < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            m.column_mut(j).neg_mut();
        }
        signs.push(sign);
    }
    signs
}
