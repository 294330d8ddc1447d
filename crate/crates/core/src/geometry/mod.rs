//! Exact Riemannian quantities of a decoder-induced manifold.
//!
//! Every routine takes a latent point as an `m x 1` column and a decoder
//! implementing [`Chart`] (any [`MlpParams`](crate::autodiff::MlpParams) or a
//! hand-written smooth map). Jacobians are checked for full rank before any
//! inverse is formed.

mod analytic;
mod curve;
pub(crate) mod local;
mod metric;
mod report;

pub use analytic::CircleMap;
pub use curve::{
    curve_energy, curve_length, geodesic, write_geodesic_csv, Geodesic, GeodesicOptions,
    LatentCurve,
};
pub use metric::AmbientMetric;
pub use report::{GeometryReport, PointGeometry};

use crate::array::RealArray;
use crate::autodiff::{eval, jacobian, jacobian_with_derivatives, Chart, MapDims};
use crate::error::{Error, Result};
use crate::linalg;

pub(crate) fn check_latent(
    dec: &(impl MapDims + ?Sized),
    z: &RealArray,
    what: &'static str,
) -> Result<()> {
    if z.rows() != dec.input_dim() || z.cols() != 1 {
        return Err(Error::dim(
            what,
            format!("{} x 1", dec.input_dim()),
            format!("{} x {}", z.rows(), z.cols()),
        ));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what}: non-finite latent point"
        )));
    }
    Ok(())
}

/// Decoded point, rank-checked Jacobian and pull-back metric at `z`.
pub(crate) fn frame<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
) -> Result<(RealArray, RealArray, RealArray)> {
    check_latent(dec, z, "latent point")?;
    let x: RealArray = eval(dec, z);
    let j = jacobian(dec, z);
    linalg::check_full_rank(&j)?;
    let hj = h.apply(&x.select_cols(&vec![0; j.cols()]), &j)?;
    Ok((x, j.clone(), j.t_matmul(&hj)))
}

/// `G(z) = Jᵀ H(f(z)) J`.
pub fn pullback_metric<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
) -> Result<RealArray> {
    Ok(frame(dec, z, h)?.2)
}

/// Orthogonal projector `J (JᵀJ)⁻¹ Jᵀ` onto the tangent space at `f(z)`.
pub fn tangent_projector<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
) -> Result<RealArray> {
    let (_, j, _) = frame(dec, z, &AmbientMetric::Identity)?;
    Ok(local::projector(&j))
}

fn jacobian_and_derivatives<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
) -> Result<(RealArray, Vec<RealArray>)> {
    check_latent(dec, z, "latent point")?;
    let m = z.rows();
    let dirs: Vec<RealArray> = (0..m)
        .map(|i| {
            let mut e = RealArray::zeros(m, 1);
            e[(i, 0)] = 1.0;
            e
        })
        .collect();
    let (j, dj) = jacobian_with_derivatives(dec, z, &dirs)?;
    linalg::check_full_rank(&j)?;
    Ok((j, dj))
}

/// Extrinsic curvature form `C_ab = Tr((∂ₐT̂)ᵀ ∂_bT̂)`, exact to rounding.
pub fn curvature_form<M: Chart<RealArray> + ?Sized>(dec: &M, z: &RealArray) -> Result<RealArray> {
    let (j, dj) = jacobian_and_derivatives(dec, z)?;
    Ok(local::symmetrize(&local::curvature_form_from(&j, &dj)))
}

/// `Tr(G⁻¹ C)`, the coordinate-invariant local extrinsic curvature.
pub fn local_extrinsic_curvature<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
) -> Result<f64> {
    let g = pullback_metric(dec, z, h)?;
    let c = curvature_form(dec, z)?;
    Ok(local::trace_solve(&g, &c).item().max(0.0))
}

/// Ascending eigenvalues of the pull-back metric at `z`.
pub fn metric_eigenvalues<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
) -> Result<Vec<f64>> {
    let g = pullback_metric(dec, z, h)?;
    Ok(linalg::symmetric_eigenvalues(&local::symmetrize(&g)))
}

/// Ascending eigenvalues of the pull-back metric measured against the latent
/// metric `k` (eigenvalues of `K⁻¹ G`). With `k = I` this is
/// [`metric_eigenvalues`]; passing the transformed latent metric keeps the
/// spectrum unchanged under any invertible latent reparameterization.
pub fn metric_eigenvalues_in<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
    k: &RealArray,
) -> Result<Vec<f64>> {
    let m = dec.input_dim();
    if k.rows() != m || k.cols() != m {
        return Err(Error::dim(
            "latent metric",
            format!("{m} x {m}"),
            format!("{} x {}", k.rows(), k.cols()),
        ));
    }
    let g = pullback_metric(dec, z, h)?;
    linalg::generalized_eigenvalues(&local::symmetrize(&g), k)
}

/// `Σᵢ (1 − λᵢ)²` over the pull-back metric eigenvalues.
pub fn local_distortion<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    z: &RealArray,
    h: &AmbientMetric,
) -> Result<f64> {
    let eig = metric_eigenvalues(dec, z, h)?;
    Ok(eig.iter().map(|l| (1.0 - l).powi(2)).sum())
}

/// Relaxed distortion over the empirical measure on the columns of `points`:
/// the mean over points of `Σⱼ (1 − λⱼ/λ̄)²`, with `λ̄` the mean eigenvalue
/// over all points. Zero exactly for scaled isometries.
pub fn relaxed_distortion_exact<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    points: &RealArray,
    h: &AmbientMetric,
) -> Result<f64> {
    if points.cols() == 0 {
        return Err(Error::InvalidArgument(
            "relaxed distortion needs at least one point".into(),
        ));
    }
    let eigs = (0..points.cols())
        .map(|i| {
            metric_eigenvalues(dec, &points.select_cols(&[i]), h)
                .map_err(|e| e.context(format!("latent point {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(local::relaxed_from_eigenvalues(&eigs))
}

/// [`relaxed_distortion_exact`] with the latent space carrying the constant
/// metric `k` instead of the identity.
pub fn relaxed_distortion_in<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    points: &RealArray,
    h: &AmbientMetric,
    k: &RealArray,
) -> Result<f64> {
    if points.cols() == 0 {
        return Err(Error::InvalidArgument(
            "relaxed distortion needs at least one point".into(),
        ));
    }
    let eigs = (0..points.cols())
        .map(|i| {
            metric_eigenvalues_in(dec, &points.select_cols(&[i]), h, k)
                .map_err(|e| e.context(format!("latent point {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(local::relaxed_from_eigenvalues(&eigs))
}
