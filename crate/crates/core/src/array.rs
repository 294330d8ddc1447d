//! Dense row-major real arrays.
//!
//! Every array is two-dimensional; a vector of length `n` is stored as an
//! `n x 1` column. Batches of vectors are matrices with one sample per column.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct RealArray {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl fmt::Debug for RealArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealArray{:?}[", self.shape)?;
        for r in 0..self.rows() {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..self.cols() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(r, c)])?;
            }
        }
        write!(f, "]")
    }
}

impl RealArray {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealArray {
            shape: [rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        RealArray {
            shape: [rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = 1.0;
        }
        out
    }

    /// Builds an array from a shape list and row-major data. Shapes of rank
    /// 1 are read as columns.
    pub fn from_shape_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let (rows, cols) = match *shape {
            [n] => (n, 1),
            [r, c] => (r, c),
            _ => return Err(Error::dim("RealArray shape", "rank 1 or 2", shape.len())),
        };
        if rows * cols != data.len() {
            return Err(Error::dim("RealArray data", rows * cols, data.len()));
        }
        Ok(RealArray {
            shape: [rows, cols],
            data,
        })
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        RealArray {
            shape: [rows, cols],
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        RealArray {
            shape: [values.len(), 1],
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        RealArray {
            shape: [1, 1],
            data: vec![value],
        }
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        RealArray::from_matrix(r, c, data)
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let c = columns.len();
        let r = columns.first().map_or(0, Vec::len);
        let mut out = Self::zeros(r, c);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), r, "ragged columns");
            for (i, v) in col.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows());
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    /// Value of a `1 x 1` array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar array");
        self.data[0]
    }

    pub fn same_shape(&self, other: &RealArray) -> bool {
        self.shape == other.shape
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealArray {
        RealArray {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RealArray, f: impl Fn(f64, f64) -> f64) -> RealArray {
        assert!(
            self.same_shape(other),
            "shape mismatch {:?} vs {:?}",
            self.shape,
            other.shape
        );
        RealArray {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &RealArray) -> RealArray {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealArray) -> RealArray {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &RealArray) -> RealArray {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn div(&self, other: &RealArray) -> RealArray {
        self.zip_map(other, |a, b| a / b)
    }

    pub fn scale(&self, s: f64) -> RealArray {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &RealArray) {
        assert!(self.same_shape(other), "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Matrix product. Each output column depends only on the matching
    /// column of `other`, with a fixed summation order, so batched and
    /// per-column products agree bitwise.
    pub fn matmul(&self, other: &RealArray) -> RealArray {
        assert_eq!(
            self.cols(),
            other.rows(),
            "matmul shape mismatch {:?} x {:?}",
            self.shape,
            other.shape
        );
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        let mut out = RealArray::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out.data[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &RealArray) -> RealArray {
        assert_eq!(self.rows(), other.rows(), "t_matmul shape mismatch");
        let (k, n, m) = (self.rows(), self.cols(), other.cols());
        let mut out = RealArray::zeros(n, m);
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &other.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                let o_row = &mut out.data[i * m..(i + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &RealArray) -> RealArray {
        assert_eq!(self.cols(), other.cols(), "matmul_t shape mismatch");
        let (n, k, m) = (self.rows(), self.cols(), other.rows());
        let mut out = RealArray::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.data[j * k..(j + 1) * k];
                out.data[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> RealArray {
        let (r, c) = (self.rows(), self.cols());
        let mut out = RealArray::zeros(c, r);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    pub fn hcat(parts: &[RealArray]) -> RealArray {
        assert!(!parts.is_empty(), "hcat of nothing");
        let rows = parts[0].rows();
        let cols: usize = parts.iter().map(RealArray::cols).sum();
        let mut out = RealArray::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.rows(), rows, "hcat row mismatch");
            for i in 0..rows {
                for j in 0..p.cols() {
                    out.data[i * cols + offset + j] = p.data[i * p.cols() + j];
                }
            }
            offset += p.cols();
        }
        out
    }

    pub fn vcat(parts: &[RealArray]) -> RealArray {
        assert!(!parts.is_empty(), "vcat of nothing");
        let cols = parts[0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols(), cols, "vcat column mismatch");
            data.extend_from_slice(&p.data);
            rows += p.rows();
        }
        RealArray::from_matrix(rows, cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> RealArray {
        let mut out = RealArray::zeros(self.rows(), idx.len());
        for i in 0..self.rows() {
            for (j, &src) in idx.iter().enumerate() {
                out.data[i * idx.len() + j] = self.data[i * self.cols() + src];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &RealArray) -> f64 {
        assert_eq!(self.len(), other.len(), "dot length mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows().min(self.cols()))
            .map(|i| self[(i, i)])
            .sum()
    }

    pub fn max_abs_diff(&self, other: &RealArray) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for RealArray {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows() && j < self.cols());
        &self.data[i * self.shape[1] + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RealArray {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows() && j < self.cols());
        &mut self.data[i * self.shape[1] + j]
    }
}
