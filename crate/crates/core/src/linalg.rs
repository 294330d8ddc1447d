//! Small dense linear algebra on [`RealArray`], backed by nalgebra.

use nalgebra::DMatrix;

use crate::array::RealArray;
use crate::error::{Error, Result};

/// Smallest singular value of a Jacobian below which metrics are rejected.
pub const RANK_TOLERANCE: f64 = 1e-10;

fn to_na(a: &RealArray) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

fn from_na(m: &DMatrix<f64>) -> RealArray {
    let mut out = RealArray::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Solves `A X = B` by LU with partial pivoting. A singular `A` yields
/// non-finite entries rather than an error; callers check rank beforehand.
pub fn solve(a: &RealArray, b: &RealArray) -> RealArray {
    assert_eq!(a.rows(), a.cols(), "solve needs a square matrix");
    assert_eq!(a.rows(), b.rows(), "solve rhs mismatch");
    match to_na(a).lu().solve(&to_na(b)) {
        Some(x) => from_na(&x),
        None => RealArray::filled(b.rows(), b.cols(), f64::NAN),
    }
}

pub fn inverse(a: &RealArray) -> RealArray {
    solve(a, &RealArray::identity(a.rows()))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &RealArray) -> Vec<f64> {
    assert_eq!(a.rows(), a.cols(), "eigenvalues of non-square matrix");
    let m = to_na(a);
    let sym = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues of `K⁻¹ A` for symmetric `A` and symmetric
/// positive-definite `K`, via the Cholesky factor `K = L Lᵀ`.
pub fn generalized_eigenvalues(a: &RealArray, k: &RealArray) -> Result<Vec<f64>> {
    assert_eq!(
        a.shape(),
        k.shape(),
        "generalized eigenvalues need matching shapes"
    );
    let kn = to_na(k);
    let chol = ((&kn + kn.transpose()) * 0.5)
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("latent metric is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(k.rows(), k.rows()))
        .expect("Cholesky factor is invertible");
    let reduced = &linv * to_na(a) * linv.transpose();
    Ok(symmetric_eigenvalues(&from_na(&reduced)))
}

pub fn singular_values(a: &RealArray) -> Vec<f64> {
    let mut sv: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Rejects Jacobians whose smallest singular value is below [`RANK_TOLERANCE`].
pub fn check_full_rank(jacobian: &RealArray) -> Result<()> {
    let smallest = singular_values(jacobian).first().copied().unwrap_or(0.0);
    if jacobian.cols() > jacobian.rows() || !(smallest > RANK_TOLERANCE) {
        return Err(Error::DegenerateMetric {
            singular_value: smallest,
        });
    }
    Ok(())
}

/// Ratio of extreme eigenvalues of a symmetric positive-definite matrix.
pub fn condition_number(spd: &RealArray) -> f64 {
    let ev = symmetric_eigenvalues(spd);
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
