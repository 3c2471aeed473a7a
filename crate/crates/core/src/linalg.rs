//! Dense and compressed-row sparse matrices with the handful of kernels the
//! model needs. Everything is `f64`, row-major.
//!
//! Kernels parallelize over output rows only. Each output row is reduced
//! sequentially in a fixed order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per rayon task. Small matrices stay on the calling thread.
const MIN_ROWS_PER_TASK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "DenseMatrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
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

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self · rhs`. Zero entries of `self` are skipped, which makes this
    /// cheap for bag-of-words attribute matrices.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(
                "matmul",
                format!("{:?} x {:?}", self.shape(), rhs.shape()),
            ));
        }
        let p = rhs.cols;
        let mut out = DenseMatrix::zeros(self.rows, p);
        if p == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(p)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, out_row)| {
                for (k, &a) in self.row(i).iter().enumerate() {
                    if a != 0.0 {
                        axpy(a, rhs.row(k), out_row);
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::dims(
                "t_matmul",
                format!("{:?}ᵀ x {:?}", self.shape(), rhs.shape()),
            ));
        }
        let p = rhs.cols;
        let mut out = DenseMatrix::zeros(self.cols, p);
        if p == 0 || self.cols == 0 {
            return Ok(out);
        }
        // Blocks of output rows; every block walks all input rows in order.
        let block = MIN_ROWS_PER_TASK;
        out.data
            .par_chunks_mut(p * block)
            .enumerate()
            .for_each(|(b, out_block)| {
                let k0 = b * block;
                let k1 = (k0 + block).min(self.cols);
                for i in 0..self.rows {
                    let lhs_row = &self.row(i)[k0..k1];
                    let rhs_row = rhs.row(i);
                    for (kk, &a) in lhs_row.iter().enumerate() {
                        if a != 0.0 {
                            axpy(a, rhs_row, &mut out_block[kk * p..(kk + 1) * p]);
                        }
                    }
                }
            });
        Ok(out)
    }

    /// `self · rhsᵀ`, i.e. all pairwise row dot products.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::dims(
                "matmul_t",
                format!("{:?} x {:?}ᵀ", self.shape(), rhs.shape()),
            ));
        }
        let p = rhs.rows;
        let mut out = DenseMatrix::zeros(self.rows, p);
        if p == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(p)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, out_row)| {
                let a = self.row(i);
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = dot(a, rhs.row(j));
                }
            });
        Ok(out)
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for row in self.data.chunks_mut(self.cols.max(1)) {
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "add_assign",
                format!("{:?} + {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// Largest elementwise absolute difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with every row scaled to unit Euclidean norm. Rows with norm
    /// below `1e-12` are divided by `1e-12` instead.
    pub fn l2_normalize_rows(&self) -> DenseMatrix {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols.max(1)) {
            let n = dot(row, row).sqrt().max(NORM_FLOOR);
            row.iter_mut().for_each(|v| *v /= n);
        }
        out
    }
}

/// Norm floor used wherever a row is L2-normalized.
pub const NORM_FLOOR: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            offsets: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::dims(
                    "SparseMatrix::from_triplets",
                    format!("entry ({i}, {j}) outside {n_rows}x{n_cols}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("sparse entry ({i}, {j})"),
                });
            }
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut offsets = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            offsets[i + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            offsets,
            indices,
            values,
        })
    }

    /// Assembles a matrix from raw compressed-row arrays, checking every
    /// structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Format(format!("compressed-row matrix: {msg}")));
        if offsets.len() != n_rows + 1 || offsets[0] != 0 {
            return bad("offset array has wrong length or does not start at 0");
        }
        if indices.len() != values.len() || *offsets.last().unwrap() != indices.len() {
            return bad("offsets, indices and values disagree on entry count");
        }
        for i in 0..n_rows {
            if offsets[i] > offsets[i + 1] {
                return bad("offsets are not monotone");
            }
            let cols = &indices[offsets[i]..offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= n_cols) {
                return bad("column indices out of range or not strictly increasing");
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            offsets,
            indices,
            values,
        })
    }

    /// Keeps the entries of a dense matrix whose magnitude is at least `threshold`.
    pub fn from_dense(m: &DenseMatrix, threshold: f64) -> Self {
        let mut offsets = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for row in m.row_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 && v.abs() >= threshold {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        SparseMatrix {
            n_rows: m.rows(),
            n_cols: m.cols(),
            offsets,
            indices,
            values,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in order, so each output row gets increasing columns.
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = next[j];
                indices[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            offsets,
            indices,
            values,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }
}

/// Sparse-dense product `a · b`.
pub fn spmm(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols != b.rows() {
        return Err(Error::dims(
            "spmm",
            format!("{}x{} x {:?}", a.n_rows, a.n_cols, b.shape()),
        ));
    }
    let p = b.cols();
    let mut out = DenseMatrix::zeros(a.n_rows, p);
    if p == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(p)
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each(|(i, out_row)| {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                axpy(v, b.row(j), out_row);
            }
        });
    Ok(out)
}
