use rand::Rng;

use crate::array::RealArray;
use crate::autodiff::{eval, jacobian, Chart, Dual, SmoothMap, Tensor};
use crate::error::{Error, Result};
use crate::geometry::AmbientMetric;

use super::{check_alpha, gaussian, reconstruction_loss, EstimatorConfig, ProbeStream};

const PURPOSE: u64 = 0x6972_6165;

/// Per-sample latent probes, each `m x L`. `w` is `None` when tied to `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct IraeProbes {
    pub v: Vec<RealArray>,
    pub w: Option<Vec<RealArray>>,
}

impl IraeProbes {
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        samples: usize,
        m: usize,
        cfg: &EstimatorConfig,
    ) -> Self {
        let mut v = Vec::with_capacity(samples);
        let mut w = Vec::with_capacity(samples);
        for _ in 0..samples {
            v.push(gaussian(rng, m, cfg.l));
            if !cfg.tie_probes {
                w.push(gaussian(rng, m, cfg.l));
            }
        }
        IraeProbes {
            v,
            w: (!cfg.tie_probes).then_some(w),
        }
    }

    pub fn for_batch(
        stream: &ProbeStream,
        samples: usize,
        m: usize,
        cfg: &EstimatorConfig,
    ) -> Self {
        let mut v = Vec::with_capacity(samples);
        let mut w = Vec::with_capacity(samples);
        for b in 0..samples {
            let mut rng = stream.rng(b, PURPOSE);
            v.push(gaussian(&mut rng, m, cfg.l));
            if !cfg.tie_probes {
                w.push(gaussian(&mut rng, m, cfg.l));
            }
        }
        IraeProbes {
            v,
            w: (!cfg.tie_probes).then_some(w),
        }
    }
}

/// Stacks per-sample probe blocks into one `m x (B·L)` array and the matching
/// column index into `z`.
fn stack(blocks: &[RealArray]) -> (RealArray, Vec<usize>) {
    let idx = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, p)| std::iter::repeat_n(b, p.cols()))
        .collect();
    (RealArray::hcat(blocks), idx)
}

fn block_sums<T: Tensor>(per_col: &T, counts: &[usize]) -> Vec<T> {
    let mut start = 0;
    counts
        .iter()
        .map(|&c| {
            let s = per_col
                .select_cols(&(start..start + c).collect::<Vec<_>>())
                .sum();
            start += c;
            s
        })
        .collect()
}

/// Per-probe-column numerator `‖G v‖²` and denominator `(Jw)ᵀ H (Jw)` terms,
/// with `Gv = Jᵀ H J v` from one forward and one reverse pass (no Jacobian),
/// plus the probe count of each sample.
fn probe_terms<T, D>(
    decoder: &D,
    z: &T,
    h: &AmbientMetric,
    probes: &IraeProbes,
) -> Result<(T, T, Vec<usize>)>
where
    T: Tensor,
    D: SmoothMap<T> + SmoothMap<Dual<T>> + ?Sized,
{
    let batch = z.cols();
    if batch == 0 {
        return Err(Error::InvalidArgument(
            "irae needs a nonempty latent batch".into(),
        ));
    }
    if probes.v.len() != batch || probes.w.as_ref().is_some_and(|w| w.len() != batch) {
        return Err(Error::dim("irae probes", batch, probes.v.len()));
    }
    let (v, idx) = stack(&probes.v);
    let counts: Vec<usize> = probes.v.iter().map(|p| p.cols()).collect();
    let zr = z.select_cols(&idx);
    let out = eval(decoder, &Dual::new(zr.clone(), z.lift(&v))?);
    let x = out.val().value();
    let jv = out.tan();
    let hjv = h.apply(&x, jv)?;
    let (_, gv) = decoder.apply_with_vjp(&zr, &hjv);
    let num_cols = gv.square();
    let den_cols = match &probes.w {
        None => jv.mul(&hjv),
        Some(w) => {
            let (w, _) = stack(w);
            let jw = eval(decoder, &Dual::new(zr.clone(), z.lift(&w))?)
                .tan()
                .clone();
            jw.mul(&h.apply(&x, &jw)?)
        }
    };
    Ok((num_cols, den_cols, counts))
}

/// Probe means of the numerator and denominator terms over every probe
/// column; they estimate the batch means of `Tr(G²)` and `Tr G`.
pub fn irae_probe_means<M: Chart<RealArray> + ?Sized>(
    decoder: &M,
    z: &RealArray,
    h: &AmbientMetric,
    probes: &IraeProbes,
) -> Result<(f64, f64)> {
    let (num, den, counts) = probe_terms(decoder, z, h, probes)?;
    let n = counts.iter().sum::<usize>() as f64;
    Ok((num.sum() / n, den.sum() / n))
}

/// Probe ratio `mean ‖G v‖² / (mean (Jw)ᵀ H (Jw))²`. With `per_sample`, each
/// sample is normalized by its own denominator and the ratios are averaged
/// instead.
pub fn irae_ratio<T, D>(
    decoder: &D,
    z: &T,
    h: &AmbientMetric,
    probes: &IraeProbes,
    per_sample: bool,
) -> Result<T>
where
    T: Tensor,
    D: SmoothMap<T> + SmoothMap<Dual<T>> + ?Sized,
{
    let batch = z.cols();
    let (num_cols, den_cols, counts) = probe_terms(decoder, z, h, probes)?;
    let ratio = |num: T, den: T, n: f64| -> Result<T> {
        let den = den.scale(1.0 / n);
        let dv = den.value().item();
        if !(dv > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "irae denominator is not positive ({dv:e}); degenerate batch"
            )));
        }
        Ok(num.scale(1.0 / n).div(&den.mul(&den)))
    };
    if per_sample {
        let nums = block_sums(&num_cols, &counts);
        let dens = block_sums(&den_cols, &counts);
        let mut acc: Option<T> = None;
        for (b, (n, d)) in nums.into_iter().zip(dens).enumerate() {
            let r = ratio(n, d, counts[b] as f64)
                .map_err(|e| e.context(format!("batch sample {b}")))?;
            acc = Some(match acc {
                None => r,
                Some(a) => a.add(&r),
            });
        }
        Ok(acc.expect("nonempty batch").scale(1.0 / batch as f64))
    } else {
        let total = counts.iter().sum::<usize>() as f64;
        ratio(num_cols.sum(), den_cols.sum(), total)
    }
}

/// Scalar IRAE probe ratio on plain arrays, drawing the probes from `rng`.
pub fn irae_distortion_estimate<M: Chart<RealArray> + ?Sized, R: Rng + ?Sized>(
    decoder: &M,
    latent_batch: &RealArray,
    h: &AmbientMetric,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    let probes = IraeProbes::draw(rng, latent_batch.cols(), latent_batch.rows(), cfg);
    Ok(irae_ratio(decoder, latent_batch, h, &probes, cfg.per_sample)?.item())
}

/// `m² · mean Tr(G²) / (mean Tr G)² − m` from exact Jacobians; equals the
/// relaxed distortion of the same points.
pub fn irae_exact_ratio<T, D>(decoder: &D, z: &T, h: &AmbientMetric) -> Result<T>
where
    T: Tensor,
    D: SmoothMap<T> + SmoothMap<Dual<T>> + ?Sized,
{
    let (m, batch) = (z.rows(), z.cols());
    if batch == 0 {
        return Err(Error::InvalidArgument(
            "irae needs a nonempty latent batch".into(),
        ));
    }
    let x = eval(decoder, z).value();
    let mut tr = Vec::with_capacity(batch);
    let mut tr2 = Vec::with_capacity(batch);
    for b in 0..batch {
        let j = jacobian(decoder, &z.select_cols(&[b]));
        let hj = h.apply(&x.select_cols(&vec![b; m]), &j)?;
        let g = j.transpose().matmul(&hj);
        tr.push(j.mul(&hj).sum());
        tr2.push(g.mul(&g.transpose()).sum());
    }
    let mean = |v: Vec<T>| {
        v[1..]
            .iter()
            .fold(v[0].clone(), |a, t| a.add(t))
            .scale(1.0 / batch as f64)
    };
    let (t1, t2) = (mean(tr), mean(tr2));
    if !(t1.value().item() > 0.0) {
        return Err(Error::InvalidArgument(
            "irae exact denominator is not positive".into(),
        ));
    }
    let mf = m as f64;
    Ok(t2.div(&t1.mul(&t1)).scale(mf * mf).offset(-mf))
}

/// Reconstruction loss plus `α` times the probe ratio on the encoded batch.
/// The constant `m²` factor and `−m` shift are left out.
pub fn irae_loss<T, E, D>(
    encoder: &E,
    decoder: &D,
    batch: &T,
    h: &AmbientMetric,
    alpha: f64,
    probes: &IraeProbes,
    per_sample: bool,
) -> Result<T>
where
    T: Tensor,
    E: SmoothMap<T> + ?Sized,
    D: Chart<T> + ?Sized,
{
    check_alpha(alpha)?;
    let recon = reconstruction_loss(encoder, decoder, batch);
    let z = encoder.apply(batch);
    let reg = irae_ratio(decoder, &z, h, probes, per_sample)?;
    Ok(recon.add(&reg.scale(alpha)))
}
