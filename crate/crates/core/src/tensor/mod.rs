//! Minimal dense linear algebra in double precision.
//!
//! Matrices are row-major. All kernels use a fixed summation order so that
//! results are reproducible bit-for-bit, including under [`Execution::Parallel`].

mod eig;
mod qr;
mod stats;

pub use eig::{sym_eig, sym_eig_with_limit, EigResult, MAX_SWEEPS};
pub use qr::lstsq;
pub use stats::{mean_and_covariance, mean_and_covariance_with};

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension mismatch: {left:?} vs {right:?} ({context})")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
        context: &'static str,
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("rank-deficient matrix: pivot of column {column} is {pivot:e} (largest {largest:e})")]
    RankDeficient { column: usize, pivot: f64, largest: f64 },
    #[error("underdetermined system: {rows} rows < {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

fn check_finite(data: &[f64]) -> Result<(), TensorError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(TensorError::NonFinite {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

/// Sum of `a[i] * b[i]` accumulated left to right.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Dense vector of finite reals.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self, TensorError> {
        check_finite(&data)?;
        Ok(Vector(data))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Wraps `data` without the finiteness check; for results of internal kernels.
    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = TensorError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vector{:?}", self.0)
    }
}

/// Dense row-major matrix of finite reals.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(TensorError::DimensionMismatch {
                    left: (1, cols),
                    right: (1, r.len()),
                    context: "from_rows: ragged rows",
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self, TensorError> {
        Ok(Matrix::from_rows(columns)?.transpose())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_vec_unchecked(self.cols, self.rows, out)
    }

    /// The listed columns of `self`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Vec::with_capacity(self.rows * indices.len());
        for i in 0..self.rows {
            let row = self.row(i);
            out.extend(indices.iter().map(|&j| row[j]));
        }
        Matrix::from_vec_unchecked(self.rows, indices.len(), out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, TensorError> {
        matmul(self, other)
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vector, TensorError> {
        if x.len() != self.cols {
            return Err(TensorError::DimensionMismatch {
                left: self.shape(),
                right: (x.len(), 1),
                context: "matrix-vector product",
            });
        }
        Ok(Vector((0..self.rows).map(|i| dot(self.row(i), x)).collect()))
    }

    /// `selfᵀ · x`, accumulated over rows in order.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Result<Vector, TensorError> {
        if x.len() != self.rows {
            return Err(TensorError::DimensionMismatch {
                left: (self.cols, self.rows),
                right: (x.len(), 1),
                context: "transposed matrix-vector product",
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(Vector(out))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Largest absolute entry of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Standard matrix product `a · b`.
///
/// Each entry `c[i][j]` is accumulated over `k` in increasing order, so the
/// result equals a row-by-row sequence of dot products bit for bit.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, TensorError> {
    matmul_with(a, b, Execution::default())
}

pub fn matmul_with(a: &Matrix, b: &Matrix, exec: Execution) -> Result<Matrix, TensorError> {
    if a.cols != b.rows {
        return Err(TensorError::DimensionMismatch {
            left: a.shape(),
            right: b.shape(),
            context: "matmul",
        });
    }
    let n = b.cols;
    let mut out = vec![0.0; a.rows * n];
    if n == 0 {
        return Ok(Matrix::from_vec_unchecked(a.rows, n, out));
    }
    // Rows of the output are independent; chunk them for parallel execution.
    let rows_per_chunk = (4096 / n.max(1)).max(1);
    par::for_each_chunk_mut(exec, &mut out, rows_per_chunk * n, |chunk_idx, chunk| {
        let first = chunk_idx * rows_per_chunk;
        for (r, out_row) in chunk.chunks_mut(n).enumerate() {
            let a_row = a.row(first + r);
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = b.row(k);
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
    });
    Ok(Matrix::from_vec_unchecked(a.rows, n, out))
}
