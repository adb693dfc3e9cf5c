//! Row-major dense matrix plus the few kernels the networks need.
//!
//! The affine kernel accumulates every output element in ascending input
//! order starting from the bias, independent of how many rows are in the
//! batch. A row evaluated alone and the same row evaluated inside a large
//! batch therefore produce bit-identical results.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Matrix::from_vec(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Concatenates two matrices column-wise.
    pub fn hcat(left: &Matrix, right: &Matrix) -> Matrix {
        assert_eq!(left.rows, right.rows, "hcat row count");
        let cols = left.cols + right.cols;
        let mut data = Vec::with_capacity(left.rows * cols);
        for i in 0..left.rows {
            data.extend_from_slice(left.row(i));
            data.extend_from_slice(right.row(i));
        }
        Matrix {
            rows: left.rows,
            cols,
            data,
        }
    }

    /// Columns `start..end` as a new matrix.
    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const ROW_BLOCK: usize = 8;

/// `out[i, :] = bias + sum_k input[i, k] * weights[k, :]` with `weights`
/// stored `in_dim x out_dim` row-major.
pub(crate) fn affine_forward(
    input: &Matrix,
    weights: &[f64],
    bias: &[f64],
    out_dim: usize,
) -> Matrix {
    let in_dim = input.cols;
    debug_assert_eq!(weights.len(), in_dim * out_dim);
    let mut out = Matrix::zeros(input.rows, out_dim);
    for block_start in (0..input.rows).step_by(ROW_BLOCK) {
        let block_end = (block_start + ROW_BLOCK).min(input.rows);
        for i in block_start..block_end {
            out.row_mut(i).copy_from_slice(bias);
        }
        for k in 0..in_dim {
            let w = &weights[k * out_dim..(k + 1) * out_dim];
            for i in block_start..block_end {
                let x = input.data[i * in_dim + k];
                if x != 0.0 {
                    axpy(x, w, &mut out.data[i * out_dim..(i + 1) * out_dim]);
                }
            }
        }
    }
    out
}

/// Accumulates the weight and bias gradients of an affine layer and
/// optionally returns the gradient with respect to its input.
pub(crate) fn affine_backward(
    input: &Matrix,
    d_out: &Matrix,
    weights: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Matrix> {
    let in_dim = input.cols;
    let out_dim = d_out.cols;
    for i in 0..input.rows {
        let g = d_out.row(i);
        axpy(1.0, g, d_bias);
        for k in 0..in_dim {
            let x = input.data[i * in_dim + k];
            if x != 0.0 {
                axpy(x, g, &mut d_weights[k * out_dim..(k + 1) * out_dim]);
            }
        }
    }
    if !want_input_grad {
        return None;
    }
    let mut d_in = Matrix::zeros(input.rows, in_dim);
    for i in 0..input.rows {
        let g = d_out.row(i);
        for k in 0..in_dim {
            d_in.data[i * in_dim + k] = dot(g, &weights[k * out_dim..(k + 1) * out_dim]);
        }
    }
    Some(d_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.0], [-1.0, 0.5, 3.0]]);
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.5, -0.5];
        let y = affine_forward(&x, &w, &b, 2);
        assert_eq!(y.row(0), &[0.5 + 1.0 + 6.0, -0.5 + 2.0 + 8.0]);
        assert_eq!(y.row(1), &[0.5 - 1.0 + 1.5 + 15.0, -0.5 - 2.0 + 2.0 + 18.0]);
    }

    #[test]
    fn batched_rows_match_single_rows_bitwise() {
        let rows: Vec<Vec<f64>> = (0..19)
            .map(|i| (0..7).map(|k| ((i * 7 + k) as f64 * 0.37).sin()).collect())
            .collect();
        let w: Vec<f64> = (0..7 * 5).map(|i| (i as f64 * 1.3).cos() * 0.1).collect();
        let b = [0.1, 0.2, 0.3, 0.4, 0.5];
        let batch = affine_forward(&Matrix::from_rows(&rows), &w, &b, 5);
        for (i, r) in rows.iter().enumerate() {
            let single = affine_forward(&Matrix::row_vector(r), &w, &b, 5);
            assert_eq!(single.row(0), batch.row(i));
        }
    }

    #[test]
    fn dot_handles_tails() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(dot(&a, &a), 140.0);
    }
}
