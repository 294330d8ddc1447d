use rand::Rng;

use crate::array::RealArray;
use crate::autodiff::{eval, Chart, Dual, SmoothMap, Tensor};
use crate::error::{Error, Result};
use crate::geometry::AmbientMetric;
use crate::linalg;

use super::{check_alpha, gaussian, reconstruction_loss, EstimatorConfig, ProbeStream};

const PURPOSE: u64 = 0x6d65_6361;
const JITTER: f64 = 1e-9;
const MAX_CONDITION: f64 = 1e10;

/// Per-sample probe vectors: `w[b]` is `D x K` (ambient), `v[b]` is `m x L`
/// (latent).
#[derive(Clone, Debug, PartialEq)]
pub struct MecaeProbes {
    pub w: Vec<RealArray>,
    pub v: Vec<RealArray>,
}

impl MecaeProbes {
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        samples: usize,
        d: usize,
        m: usize,
        cfg: &EstimatorConfig,
    ) -> Self {
        let mut w = Vec::with_capacity(samples);
        let mut v = Vec::with_capacity(samples);
        for _ in 0..samples {
            w.push(gaussian(rng, d, cfg.k));
            v.push(gaussian(rng, m, cfg.l));
        }
        MecaeProbes { w, v }
    }

    /// One independent stream per batch sample.
    pub fn for_batch(
        stream: &ProbeStream,
        samples: usize,
        d: usize,
        m: usize,
        cfg: &EstimatorConfig,
    ) -> Self {
        let mut w = Vec::with_capacity(samples);
        let mut v = Vec::with_capacity(samples);
        for b in 0..samples {
            let mut rng = stream.rng(b, PURPOSE);
            w.push(gaussian(&mut rng, d, cfg.k));
            v.push(gaussian(&mut rng, m, cfg.l));
        }
        MecaeProbes { w, v }
    }
}

/// Per-sample curvature estimates `(1/KL) Σₖ Σₗ vₗᵀ G⁻¹ Mₖᵀ Mₖ vₗ` where
/// `Mₖ = ∂(T̂ wₖ)/∂z`, at each column of `z`.
pub fn mecae_estimates<T, D>(
    decoder: &D,
    z: &T,
    h: &AmbientMetric,
    probes: &MecaeProbes,
) -> Result<Vec<T>>
where
    T: Tensor,
    D: Chart<T> + ?Sized,
{
    let m = z.rows();
    let batch = z.cols();
    if probes.w.len() != batch || probes.v.len() != batch {
        return Err(Error::dim(
            "mecae probes",
            batch,
            probes.w.len().min(probes.v.len()),
        ));
    }
    // column b·m² + j·m + i: point z_b, inner seed eᵢ, outer seed eⱼ
    let sq = m * m;
    let idx: Vec<usize> = (0..batch)
        .flat_map(|b| std::iter::repeat_n(b, sq))
        .collect();
    let mut inner = RealArray::zeros(m, batch * sq);
    let mut outer = RealArray::zeros(m, batch * sq);
    for b in 0..batch {
        for j in 0..m {
            for i in 0..m {
                inner[(i, b * sq + j * m + i)] = 1.0;
                outer[(j, b * sq + j * m + i)] = 1.0;
            }
        }
    }
    let zr = z.select_cols(&idx);
    let zero = z.lift(&RealArray::zeros(m, batch * sq));
    let x = Dual::new(
        Dual::new(zr, z.lift(&inner))?,
        Dual::new(z.lift(&outer), zero)?,
    )?;
    let y = eval(decoder, &x);
    let x_val = y.val().val().value();
    let (jac_all, hess_all) = (y.val().tan(), y.tan().tan());

    let mut out = Vec::with_capacity(batch);
    for b in 0..batch {
        let base = b * sq;
        let j = jac_all.select_cols(&(base..base + m).collect::<Vec<_>>());
        linalg::check_full_rank(&j.value()).map_err(|e| e.context(format!("batch sample {b}")))?;
        let hj = h.apply(&x_val.select_cols(&vec![base; m]), &j)?;
        let mut g = j.transpose().matmul(&hj);
        if linalg::condition_number(&g.value()) > MAX_CONDITION {
            g = g.add(&g.lift(&RealArray::identity(m).scale(JITTER)));
        }
        let dj: Vec<T> = (0..m)
            .map(|jj| {
                hess_all.select_cols(&(base + jj * m..base + (jj + 1) * m).collect::<Vec<_>>())
            })
            .collect();
        let v = z.lift(&probes.v[b]);
        let a = g.solve(&v);
        let pw = &probes.w[b];
        let mut total: Option<T> = None;
        for k in 0..pw.cols() {
            let w = z.lift(&pw.select_cols(&[k]));
            let wd = Dual::constant_of(w)?;
            let cols: Vec<T> = dj
                .iter()
                .map(|d| {
                    let jd = Dual::new(j.clone(), d.clone())?;
                    let jt = jd.transpose();
                    let pw = jd.matmul(&jt.matmul(&jd).solve(&jt.matmul(&wd)));
                    Ok(pw.tan().clone())
                })
                .collect::<Result<Vec<T>>>()?;
            let mk = T::hcat(&cols);
            let term = mk.matmul(&a).mul(&mk.matmul(&v)).sum();
            total = Some(match total {
                None => term,
                Some(t) => t.add(&term),
            });
        }
        let total = total.expect("at least one ambient probe");
        out.push(total.scale(1.0 / (pw.cols() * probes.v[b].cols()) as f64));
    }
    Ok(out)
}

/// Single-point stochastic estimate of the local extrinsic curvature.
pub fn mecae_curvature_estimate<M: Chart<RealArray> + ?Sized, R: Rng + ?Sized>(
    decoder: &M,
    z: &RealArray,
    h: &AmbientMetric,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    crate::geometry::check_latent(decoder, z, "mecae point")?;
    let probes = MecaeProbes::draw(rng, 1, decoder.output_dim(), z.rows(), cfg);
    Ok(mecae_estimates(decoder, z, h, &probes)?[0].item())
}

/// Reconstruction loss plus `α` times the mean curvature estimate at the
/// encoded batch.
pub fn mecae_loss<T, E, D>(
    encoder: &E,
    decoder: &D,
    batch: &T,
    h: &AmbientMetric,
    alpha: f64,
    probes: &MecaeProbes,
) -> Result<T>
where
    T: Tensor,
    E: SmoothMap<T> + ?Sized,
    D: Chart<T> + ?Sized,
{
    check_alpha(alpha)?;
    let recon = reconstruction_loss(encoder, decoder, batch);
    let z = encoder.apply(batch);
    let est = mecae_estimates(decoder, &z, h, probes)?;
    let reg = est[1..]
        .iter()
        .fold(est[0].clone(), |acc, e| acc.add(e))
        .scale(1.0 / est.len() as f64);
    Ok(recon.add(&reg.scale(alpha)))
}
