//! Forward-mode dual numbers over any [`Tensor`].
//!
//! `Dual<T>` carries a primal `val` and a tangent `tan` of the same shape.
//! Every rule is expressed through `T`'s own operations, so `Dual<Dual<T>>`
//! gives second directional derivatives and `Dual<Var>` stays differentiable
//! by the reverse tape.

use crate::array::RealArray;
use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Deepest forward-mode nesting the engine accepts.
pub const MAX_FORWARD_DEPTH: usize = 2;

/// Forward-mode nesting level, validated against [`MAX_FORWARD_DEPTH`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DualDepth(u8);

impl DualDepth {
    pub fn new(level: usize) -> Result<Self> {
        if level > MAX_FORWARD_DEPTH {
            return Err(Error::UnsupportedDepth {
                requested: level,
                max: MAX_FORWARD_DEPTH,
            });
        }
        Ok(DualDepth(level as u8))
    }

    pub fn of<T: Tensor>() -> Result<Self> {
        Self::new(T::DEPTH)
    }

    pub fn level(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub struct Dual<T> {
    val: T,
    tan: T,
}

impl<T: Tensor> Dual<T> {
    /// Pairs a primal with a tangent seed. Fails when the result would nest
    /// deeper than [`MAX_FORWARD_DEPTH`] or the shapes differ.
    pub fn new(val: T, tan: T) -> Result<Self> {
        DualDepth::new(T::DEPTH + 1)?;
        if val.rows() != tan.rows() || val.cols() != tan.cols() {
            return Err(Error::dim(
                "dual tangent",
                format!("{}x{}", val.rows(), val.cols()),
                format!("{}x{}", tan.rows(), tan.cols()),
            ));
        }
        Ok(Dual { val, tan })
    }

    /// A primal with zero tangent.
    pub fn constant_of(val: T) -> Result<Self> {
        let zero = val.lift(&RealArray::zeros(val.rows(), val.cols()));
        Self::new(val, zero)
    }

    pub fn val(&self) -> &T {
        &self.val
    }

    pub fn tan(&self) -> &T {
        &self.tan
    }

    pub fn into_parts(self) -> (T, T) {
        (self.val, self.tan)
    }

    fn raw(val: T, tan: T) -> Self {
        Dual { val, tan }
    }
}

impl<T: Tensor> Tensor for Dual<T> {
    type Param = T::Param;
    type Ctx = T::Ctx;
    const DEPTH: usize = T::DEPTH + 1;

    fn ctx(&self) -> Self::Ctx {
        self.val.ctx()
    }

    fn constant(ctx: Self::Ctx, value: &RealArray) -> Self {
        let zero = RealArray::zeros(value.rows(), value.cols());
        Dual::raw(T::constant(ctx, value), T::constant(ctx, &zero))
    }

    fn value(&self) -> RealArray {
        self.val.value()
    }

    fn rows(&self) -> usize {
        self.val.rows()
    }

    fn cols(&self) -> usize {
        self.val.cols()
    }

    fn add(&self, other: &Self) -> Self {
        Dual::raw(self.val.add(&other.val), self.tan.add(&other.tan))
    }

    fn sub(&self, other: &Self) -> Self {
        Dual::raw(self.val.sub(&other.val), self.tan.sub(&other.tan))
    }

    fn mul(&self, other: &Self) -> Self {
        Dual::raw(
            self.val.mul(&other.val),
            self.tan.mul(&other.val).add(&self.val.mul(&other.tan)),
        )
    }

    fn div(&self, other: &Self) -> Self {
        let q = self.val.div(&other.val);
        let tan = self.tan.sub(&q.mul(&other.tan)).div(&other.val);
        Dual::raw(q, tan)
    }

    fn scale(&self, s: f64) -> Self {
        Dual::raw(self.val.scale(s), self.tan.scale(s))
    }

    fn offset(&self, s: f64) -> Self {
        Dual::raw(self.val.offset(s), self.tan.clone())
    }

    fn tanh(&self) -> Self {
        let y = self.val.tanh();
        let dy = y.square().scale(-1.0).offset(1.0);
        Dual::raw(y, self.tan.mul(&dy))
    }

    fn sigmoid(&self) -> Self {
        let s = self.val.sigmoid();
        let ds = s.mul(&s.scale(-1.0).offset(1.0));
        Dual::raw(s, self.tan.mul(&ds))
    }

    fn softplus(&self) -> Self {
        Dual::raw(self.val.softplus(), self.tan.mul(&self.val.sigmoid()))
    }

    fn sin(&self) -> Self {
        Dual::raw(self.val.sin(), self.tan.mul(&self.val.cos()))
    }

    fn cos(&self) -> Self {
        Dual::raw(self.val.cos(), self.tan.mul(&self.val.sin()).scale(-1.0))
    }

    fn matmul(&self, other: &Self) -> Self {
        Dual::raw(
            self.val.matmul(&other.val),
            self.tan
                .matmul(&other.val)
                .add(&self.val.matmul(&other.tan)),
        )
    }

    fn transpose(&self) -> Self {
        Dual::raw(self.val.transpose(), self.tan.transpose())
    }

    fn solve(&self, rhs: &Self) -> Self {
        // d(A⁻¹B) = A⁻¹(dB − dA·A⁻¹B)
        let x = self.val.solve(&rhs.val);
        let tan = self.val.solve(&rhs.tan.sub(&self.tan.matmul(&x)));
        Dual::raw(x, tan)
    }

    fn hcat(parts: &[Self]) -> Self {
        let vals: Vec<T> = parts.iter().map(|p| p.val.clone()).collect();
        let tans: Vec<T> = parts.iter().map(|p| p.tan.clone()).collect();
        Dual::raw(T::hcat(&vals), T::hcat(&tans))
    }

    fn vcat(parts: &[Self]) -> Self {
        let vals: Vec<T> = parts.iter().map(|p| p.val.clone()).collect();
        let tans: Vec<T> = parts.iter().map(|p| p.tan.clone()).collect();
        Dual::raw(T::vcat(&vals), T::vcat(&tans))
    }

    fn select_cols(&self, idx: &[usize]) -> Self {
        Dual::raw(self.val.select_cols(idx), self.tan.select_cols(idx))
    }

    fn sum(&self) -> Self {
        Dual::raw(self.val.sum(), self.tan.sum())
    }

    fn affine(&self, w: &Self::Param, b: &Self::Param) -> Self {
        Dual::raw(self.val.affine(w, b), self.tan.linear(w))
    }

    fn linear(&self, w: &Self::Param) -> Self {
        Dual::raw(self.val.linear(w), self.tan.linear(w))
    }

    fn linear_t(&self, w: &Self::Param) -> Self {
        Dual::raw(self.val.linear_t(w), self.tan.linear_t(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> RealArray {
        RealArray::column(v)
    }

    #[test]
    fn depth_cap() {
        let x = col(&[1.0]);
        let d1 = Dual::new(x.clone(), x.clone()).unwrap();
        let d2 = Dual::new(d1.clone(), d1.clone()).unwrap();
        assert_eq!(<Dual<Dual<RealArray>> as Tensor>::DEPTH, 2);
        match Dual::new(d2.clone(), d2) {
            Err(Error::UnsupportedDepth {
                requested: 3,
                max: 2,
            }) => {}
            other => panic!("expected depth error, got {other:?}"),
        }
        assert!(DualDepth::new(3).is_err());
        assert_eq!(DualDepth::of::<Dual<RealArray>>().unwrap().level(), 1);
    }

    #[test]
    fn scalar_rules() {
        let x = Dual::new(col(&[0.7]), col(&[1.0])).unwrap();
        let y = x.mul(&x).div(&x.sin().offset(2.0));
        let (v, d) = (0.7f64, {
            let s = 0.7f64.sin() + 2.0;
            (2.0 * 0.7 * s - 0.49 * 0.7f64.cos()) / (s * s)
        });
        assert!((y.val().item() - v * v / (v.sin() + 2.0)).abs() < 1e-15);
        assert!((y.tan().item() - d).abs() < 1e-14);
    }

    #[test]
    fn nested_gives_second_derivative() {
        // f(x) = tanh(x): f'' = -2 tanh (1 - tanh²)
        let x = 0.3f64;
        let inner = Dual::new(col(&[x]), col(&[1.0])).unwrap();
        let outer_t = Dual::new(col(&[1.0]), col(&[0.0])).unwrap();
        let z = Dual::new(inner, outer_t).unwrap();
        let y = z.tanh();
        let t = x.tanh();
        assert!((y.tan().tan().item() - (-2.0 * t * (1.0 - t * t))).abs() < 1e-15);
        let sp = z.softplus();
        let s = crate::autodiff::tensor::sigmoid(x);
        assert!((sp.tan().tan().item() - s * (1.0 - s)).abs() < 1e-15);
    }

    #[test]
    fn solve_tangent_matches_inverse_derivative() {
        let a = RealArray::from_matrix(2, 2, vec![3.0, 1.0, 1.0, 2.0]);
        let da = RealArray::from_matrix(2, 2, vec![0.1, -0.2, 0.3, 0.05]);
        let b = col(&[1.0, -1.0]);
        let ad = Dual::new(a.clone(), da.clone()).unwrap();
        let bd = Dual::constant_of(b.clone()).unwrap();
        let x = ad.solve(&bd);
        let h = 1e-6;
        let xp = crate::linalg::solve(&a.add(&da.scale(h)), &b);
        let xm = crate::linalg::solve(&a.sub(&da.scale(h)), &b);
        let fd = xp.sub(&xm).scale(0.5 / h);
        assert!(x.tan().max_abs_diff(&fd) < 1e-8);
    }
}
