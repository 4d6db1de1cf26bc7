//! Dense row-major `f64` matrices and the handful of kernels the rest of the
//! crate is built on: matrix product, masked row softmax and head averaging.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::config("ragged rows"));
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    /// Largest `|row_sum - 1|` over all rows, with the offending row index.
    pub fn worst_row_sum_error(&self) -> (usize, f64) {
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - 1.0).abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|v| *v >= 0.0) && self.worst_row_sum_error().1 <= tol
    }

    /// True when every entry strictly above the diagonal is zero.
    pub fn is_causal(&self) -> bool {
        (0..self.rows).all(|r| self.row(r).iter().skip(r + 1).all(|v| *v == 0.0))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Standard dense product `a × b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::config(format!(
            "matmul dimension mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// In-place max-subtracted softmax over `row[..len]`; entries past `len`
/// are set to exactly zero.
pub fn softmax_prefix_in_place(row: &mut [f64], len: usize) {
    let len = len.min(row.len());
    let max = row[..len].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in &mut row[..len] {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut row[..len] {
        *v /= sum;
    }
    for v in &mut row[len..] {
        *v = 0.0;
    }
}

/// Row softmax with an optional per-row causal prefix length.
pub fn softmax_rows(m: &Matrix, mask: Option<&[usize]>) -> Result<Matrix> {
    if let Some(mask) = mask {
        if mask.len() != m.rows {
            return Err(Error::config(format!(
                "mask has {} entries for {} rows",
                mask.len(),
                m.rows
            )));
        }
        if let Some(bad) = mask.iter().find(|&&l| l == 0 || l > m.cols) {
            return Err(Error::config(format!(
                "mask length {} outside [1, {}]",
                bad, m.cols
            )));
        }
    }
    let mut out = m.clone();
    for r in 0..m.rows {
        let len = mask.map_or(m.cols, |mk| mk[r]);
        softmax_prefix_in_place(out.row_mut(r), len);
    }
    Ok(out)
}

/// Elementwise arithmetic mean of equally shaped matrices.
pub fn mean_over_heads(stack: &[Matrix]) -> Result<Matrix> {
    let first = stack
        .first()
        .ok_or_else(|| Error::config("mean_over_heads called with no heads"))?;
    let shape = first.shape();
    if let Some(bad) = stack.iter().find(|m| m.shape() != shape) {
        return Err(Error::config(format!(
            "head shape mismatch: {:?} vs {:?}",
            shape,
            bad.shape()
        )));
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for m in stack {
        for (o, v) in out.data.iter_mut().zip(&m.data) {
            *o += v;
        }
    }
    let h = stack.len() as f64;
    for o in &mut out.data {
        *o /= h;
    }
    Ok(out)
}
