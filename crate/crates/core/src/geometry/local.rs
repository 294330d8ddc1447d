//! Pointwise building blocks shared by the exact routines and the losses.
//! All are generic over [`Tensor`] so they can run on tape variables.

use crate::array::RealArray;
use crate::autodiff::{Dual, Tensor};

/// `J (JᵀJ)⁻¹ Jᵀ` for a `D x m` Jacobian.
pub(crate) fn projector<T: Tensor>(j: &T) -> T {
    let jt = j.transpose();
    j.matmul(&jt.matmul(j).solve(&jt))
}

/// `C_ab = Tr((∂ₐT̂)ᵀ ∂_bT̂)` from the Jacobian and its coordinate derivatives
/// `∂ₐJ`, one per latent axis.
pub(crate) fn curvature_form_from<T: Tensor>(j: &T, dj: &[T]) -> T {
    let dp: Vec<T> = dj
        .iter()
        .map(|d| {
            let jd = Dual::new(j.clone(), d.clone())
                .expect("curvature form needs one spare forward level");
            projector(&jd).tan().clone()
        })
        .collect();
    let m = dj.len();
    let rows: Vec<T> = (0..m)
        .map(|a| {
            let entries: Vec<T> = (0..m).map(|b| dp[a].dot(&dp[b])).collect();
            T::hcat(&entries)
        })
        .collect();
    T::vcat(&rows)
}

/// `Tr(G⁻¹ C)` for symmetric `C`, as a `1 x 1` value.
pub(crate) fn trace_solve<T: Tensor>(g: &T, c: &T) -> T {
    let eye = g.lift(&RealArray::identity(g.rows()));
    g.solve(&eye).mul(&c.transpose()).sum()
}

/// Exactly symmetric copy of `g`.
pub(crate) fn symmetrize(g: &RealArray) -> RealArray {
    g.add(&g.transpose()).scale(0.5)
}

/// Relaxed distortion from per-point eigenvalue lists.
pub(crate) fn relaxed_from_eigenvalues(eigs: &[Vec<f64>]) -> f64 {
    let n = eigs.len() as f64;
    let m = eigs[0].len() as f64;
    let mean = eigs.iter().map(|e| e.iter().sum::<f64>() / m).sum::<f64>() / n;
    eigs.iter()
        .map(|e| e.iter().map(|l| (1.0 - l / mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n
}
