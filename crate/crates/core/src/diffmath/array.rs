//! Dense 64-bit arrays of rank 1 or 2 with the handful of kernels the
//! actor-critic networks need.
//!
//! There is no broadcasting except bias-row addition ([`DenseArray::add_bias`]);
//! every other shape mismatch is an error naming both shapes.

use crate::error::{Error, Result};

/// Row-major dense array, rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn shape_str(shape: &[usize]) -> String {
    format!("{shape:?}")
}

impl DenseArray {
    /// Rank-1 array from raw values.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        DenseArray { shape: vec![data.len()], data }
    }

    /// Rank-2 array from row-major values.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "matrix [{rows}, {cols}] needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseArray { shape: vec![rows, cols], data })
    }

    /// Rank-1 array holding a single value; used as the scalar shape.
    pub fn scalar(value: f64) -> Self {
        DenseArray { shape: vec![1], data: vec![value] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            (shape.len() == 1 || shape.len() == 2) && shape.iter().all(|&d| d > 0),
            "bad shape {shape:?}"
        );
        DenseArray { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn zeros_like(other: &DenseArray) -> Self {
        DenseArray { shape: other.shape.clone(), data: vec![0.0; other.data.len()] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dims are positive by construction
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar array.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!(),
        }
    }

    /// Number of rows (1 for rank-1 arrays).
    pub fn rows(&self) -> usize {
        self.rows_cols().0
    }

    /// Number of columns (the length for rank-1 arrays).
    pub fn cols(&self) -> usize {
        self.rows_cols().1
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        let (_, c) = self.rows_cols();
        self.data[row * c + col]
    }

    /// One row of a rank-2 array as a fresh rank-1 array.
    pub fn row(&self, r: usize) -> DenseArray {
        let (rows, cols) = self.rows_cols();
        assert!(r < rows);
        DenseArray::vector(self.data[r * cols..(r + 1) * cols].to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Fault(format!("non-finite value in {context}")))
        }
    }

    fn require_rank2(&self, op: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::Dim(format!("{op} requires rank-2 operand, got shape {}", shape_str(&self.shape)))),
        }
    }

    /// Standard matrix product. Both operands must be rank 2 with matching
    /// inner dimensions.
    pub fn matmul(&self, other: &DenseArray) -> Result<DenseArray> {
        let (m, k) = self.require_rank2("matmul")?;
        let (k2, n) = other.require_rank2("matmul")?;
        if k != k2 {
            return Err(Error::Dim(format!(
                "matmul inner dimensions differ: {} vs {}",
                shape_str(&self.shape),
                shape_str(&other.shape)
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        DenseArray::matrix(m, n, out)
    }

    pub fn transpose(&self) -> Result<DenseArray> {
        let (r, c) = self.require_rank2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        DenseArray::matrix(c, r, out)
    }

    /// Elementwise sum; shapes must be identical.
    pub fn add(&self, other: &DenseArray) -> Result<DenseArray> {
        if self.shape != other.shape {
            return Err(Error::Dim(format!(
                "add shapes differ: {} vs {}",
                shape_str(&self.shape),
                shape_str(&other.shape)
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseArray { shape: self.shape.clone(), data })
    }

    /// Add a rank-1 bias row to every row of a rank-2 array — the only
    /// permitted broadcast.
    pub fn add_bias(&self, bias: &DenseArray) -> Result<DenseArray> {
        let (r, c) = self.require_rank2("add_bias")?;
        if bias.rank() != 1 || bias.len() != c {
            return Err(Error::Dim(format!(
                "add_bias expects bias [{}], got {}",
                c,
                shape_str(&bias.shape)
            )));
        }
        let mut data = self.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += bias.data[j];
            }
        }
        Ok(DenseArray { shape: self.shape.clone(), data })
    }

    /// Column sums of a rank-2 array (adjoint of `add_bias` wrt the bias).
    pub fn col_sum(&self) -> Result<DenseArray> {
        let (r, c) = self.require_rank2("col_sum")?;
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data[i * c + j];
            }
        }
        Ok(DenseArray::vector(out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseArray {
        DenseArray { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> DenseArray {
        self.map(|v| c * v)
    }

    pub fn mul_elem(&self, other: &DenseArray) -> Result<DenseArray> {
        if self.shape != other.shape {
            return Err(Error::Dim(format!(
                "mul_elem shapes differ: {} vs {}",
                shape_str(&self.shape),
                shape_str(&other.shape)
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(DenseArray { shape: self.shape.clone(), data })
    }

    /// Row-wise log-softmax, stabilized by per-row max subtraction.
    pub fn log_softmax_rows(&self) -> Result<DenseArray> {
        let (r, c) = self.require_rank2("log_softmax")?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let log_sum = sum.ln();
            for j in 0..c {
                data[i * c + j] = row[j] - max - log_sum;
            }
        }
        Ok(DenseArray { shape: self.shape.clone(), data })
    }

    /// Select entry `idx[r]` from each row of a rank-2 array.
    pub fn pick_per_row(&self, idx: &[usize]) -> Result<DenseArray> {
        let (r, c) = self.require_rank2("pick_per_row")?;
        if idx.len() != r {
            return Err(Error::Dim(format!("pick_per_row needs {r} indices, got {}", idx.len())));
        }
        let mut out = Vec::with_capacity(r);
        for (i, &a) in idx.iter().enumerate() {
            if a >= c {
                return Err(Error::Contract(format!("pick_per_row index {a} out of range for {c} columns")));
            }
            out.push(self.data[i * c + a]);
        }
        Ok(DenseArray::vector(out))
    }

    /// Dot product against an equal-length array.
    pub fn dot(&self, w: &DenseArray) -> Result<f64> {
        if self.len() != w.len() {
            return Err(Error::Dim(format!(
                "dot lengths differ: {} vs {}",
                shape_str(&self.shape),
                shape_str(&w.shape)
            )));
        }
        Ok(self.data.iter().zip(&w.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// In-place `self += c * other`; shapes must be identical.
    pub fn axpy(&mut self, c: f64, other: &DenseArray) {
        assert_eq!(self.shape, other.shape, "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}
