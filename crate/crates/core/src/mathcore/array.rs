use serde::{Deserialize, Serialize};

use super::MathError;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MathError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MathError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "Array2 dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// Single-row matrix holding `values`.
    pub fn row(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "row vector must be non-empty");
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MathError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MathError::BadLength {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1×1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, MathError> {
        self.check_same(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_same(&self, other: &Self, op: &'static str) -> Result<(), MathError> {
        if self.shape() != other.shape() {
            return Err(MathError::Shape {
                op,
                shapes: vec![self.shape(), other.shape()],
            });
        }
        Ok(())
    }

    /// Adds `other` into `self` in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<(), MathError> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MathError> {
        if self.cols != other.rows {
            return Err(MathError::Shape {
                op: "matmul",
                shapes: vec![self.shape(), other.shape()],
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        Ok(gemm(n, k, m, &self.data, (k, 1), &other.data, (m, 1)))
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self, MathError> {
        if self.rows != other.rows {
            return Err(MathError::Shape {
                op: "matmul_tn",
                shapes: vec![self.shape(), other.shape()],
            });
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        Ok(gemm(n, k, m, &self.data, (1, n), &other.data, (m, 1)))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self, MathError> {
        if self.cols != other.cols {
            return Err(MathError::Shape {
                op: "matmul_nt",
                shapes: vec![self.shape(), other.shape()],
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.rows);
        Ok(gemm(n, k, m, &self.data, (k, 1), &other.data, (1, k)))
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// Elementwise sum; `other` may be a single row broadcast over every row of `self`.
    pub fn add_broadcast(&self, other: &Self) -> Result<Self, MathError> {
        if self.shape() == other.shape() {
            return self.zip_map(other, "add", |a, b| a + b);
        }
        if other.rows == 1 && other.cols == self.cols {
            let mut out = self.clone();
            for row in out.data.chunks_mut(self.cols) {
                for (o, &b) in row.iter_mut().zip(&other.data) {
                    *o += b;
                }
            }
            return Ok(out);
        }
        Err(MathError::Shape {
            op: "add",
            shapes: vec![self.shape(), other.shape()],
        })
    }

    /// Column sums as a single row.
    pub fn sum_rows(&self) -> Self {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Self {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn concat_cols(&self, other: &Self) -> Result<Self, MathError> {
        if self.rows != other.rows {
            return Err(MathError::Shape {
                op: "concat_cols",
                shapes: vec![self.shape(), other.shape()],
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row_slice(r));
            data.extend_from_slice(other.row_slice(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self, MathError> {
        if start >= end || end > self.cols {
            return Err(MathError::Slice {
                start,
                end,
                cols: self.cols,
            });
        }
        let cols = end - start;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row_slice(r)[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `n×m` product of an `n×k` and a `k×m` operand given by (row, column) strides.
fn gemm(n: usize, k: usize, m: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize)) -> Array2 {
    let mut out = vec![0.0; n * m];
    // SAFETY: both operands hold n*k and k*m elements addressed through the
    // given strides, and `out` is a dense n*m row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    Array2 {
        rows: n,
        cols: m,
        data: out,
    }
}
