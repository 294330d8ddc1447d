//! The array interface every differentiation mode implements.
//!
//! Code written against [`Tensor`] runs unchanged on plain arrays, on
//! forward-mode [`Dual`](super::Dual) values (nested up to two levels) and on
//! reverse-mode tape variables. Losses are written once and evaluated or
//! differentiated by picking the element type.

use crate::array::RealArray;
use crate::linalg;

pub trait Tensor: Clone + Sized {
    /// Handle for network weights at the innermost (non-dual) level.
    type Param: Clone;
    /// What is needed to create constants (nothing for arrays, the tape for
    /// tape variables).
    type Ctx: Copy;
    /// Number of forward-mode layers wrapped around the innermost type.
    const DEPTH: usize;

    fn ctx(&self) -> Self::Ctx;
    fn constant(ctx: Self::Ctx, value: &RealArray) -> Self;
    /// Innermost primal value.
    fn value(&self) -> RealArray;
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    /// Elementwise product.
    fn mul(&self, other: &Self) -> Self;
    /// Elementwise quotient.
    fn div(&self, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// Adds `s` to every entry.
    fn offset(&self, s: f64) -> Self;

    fn tanh(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn softplus(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn matmul(&self, other: &Self) -> Self;
    fn transpose(&self) -> Self;
    /// `self⁻¹ · rhs` for square `self`.
    fn solve(&self, rhs: &Self) -> Self;
    fn hcat(parts: &[Self]) -> Self;
    fn vcat(parts: &[Self]) -> Self;
    fn select_cols(&self, idx: &[usize]) -> Self;
    /// Sum of all entries as a `1 x 1` array.
    fn sum(&self) -> Self;

    /// `W·self + b` with the bias broadcast across columns.
    fn affine(&self, w: &Self::Param, b: &Self::Param) -> Self;
    /// `W·self`.
    fn linear(&self, w: &Self::Param) -> Self;
    /// `Wᵀ·self`.
    fn linear_t(&self, w: &Self::Param) -> Self;

    fn lift(&self, value: &RealArray) -> Self {
        Self::constant(self.ctx(), value)
    }

    fn square(&self) -> Self {
        self.mul(self)
    }

    fn dot(&self, other: &Self) -> Self {
        self.mul(other).sum()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn affine(x: &RealArray, w: &RealArray, b: &RealArray) -> RealArray {
    let mut out = w.matmul(x);
    for i in 0..out.rows() {
        let bi = b[(i, 0)];
        for j in 0..out.cols() {
            out[(i, j)] += bi;
        }
    }
    out
}

impl Tensor for RealArray {
    type Param = RealArray;
    type Ctx = ();
    const DEPTH: usize = 0;

    fn ctx(&self) {}
    fn constant(_: (), value: &RealArray) -> Self {
        value.clone()
    }
    fn value(&self) -> RealArray {
        self.clone()
    }
    fn rows(&self) -> usize {
        RealArray::rows(self)
    }
    fn cols(&self) -> usize {
        RealArray::cols(self)
    }
    fn add(&self, other: &Self) -> Self {
        RealArray::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        RealArray::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        self.hadamard(other)
    }
    fn div(&self, other: &Self) -> Self {
        RealArray::div(self, other)
    }
    fn scale(&self, s: f64) -> Self {
        RealArray::scale(self, s)
    }
    fn offset(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }
    fn tanh(&self) -> Self {
        self.map(f64::tanh)
    }
    fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }
    fn softplus(&self) -> Self {
        self.map(softplus)
    }
    fn sin(&self) -> Self {
        self.map(f64::sin)
    }
    fn cos(&self) -> Self {
        self.map(f64::cos)
    }
    fn matmul(&self, other: &Self) -> Self {
        RealArray::matmul(self, other)
    }
    fn transpose(&self) -> Self {
        RealArray::transpose(self)
    }
    fn solve(&self, rhs: &Self) -> Self {
        linalg::solve(self, rhs)
    }
    fn hcat(parts: &[Self]) -> Self {
        RealArray::hcat(parts)
    }
    fn vcat(parts: &[Self]) -> Self {
        RealArray::vcat(parts)
    }
    fn select_cols(&self, idx: &[usize]) -> Self {
        RealArray::select_cols(self, idx)
    }
    fn sum(&self) -> Self {
        RealArray::scalar(RealArray::sum(self))
    }
    fn affine(&self, w: &RealArray, b: &RealArray) -> Self {
        affine(self, w, b)
    }
    fn linear(&self, w: &RealArray) -> Self {
        w.matmul(self)
    }
    fn linear_t(&self, w: &RealArray) -> Self {
        w.t_matmul(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0);
    }
}
