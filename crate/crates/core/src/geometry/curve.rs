//! Discrete latent curves, their length and energy under the pull-back
//! metric, and energy-minimizing geodesics.

use std::io::Write;

use crate::array::RealArray;
use crate::autodiff::{eval, Chart, Dual, MapDims};
use crate::error::{Error, Result};
use crate::linalg;
use crate::table::Table;

use super::metric::AmbientMetric;

/// Points `z₀ … zₙ` of a curve sampled at uniform parameter spacing, stored
/// as the columns of an `m x (n+1)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCurve {
    points: RealArray,
}

impl LatentCurve {
    pub fn new(points: RealArray) -> Result<Self> {
        if points.cols() < 2 || points.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "a curve needs at least two points of positive dimension, got {}x{}",
                points.rows(),
                points.cols()
            )));
        }
        if !points.is_finite() {
            return Err(Error::InvalidArgument("curve has non-finite points".into()));
        }
        Ok(LatentCurve { points })
    }

    /// Straight chord from `start` to `end` with `n` uniform segments.
    pub fn chord(start: &RealArray, end: &RealArray, n: usize) -> Result<Self> {
        if !start.same_shape(end) || start.cols() != 1 {
            return Err(Error::dim(
                "chord endpoints",
                format!("{:?}", start.shape()),
                format!("{:?}", end.shape()),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "a curve needs at least one segment".into(),
            ));
        }
        let m = start.rows();
        let mut pts = RealArray::zeros(m, n + 1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            for i in 0..m {
                pts[(i, k)] = if k == n {
                    end[(i, 0)]
                } else {
                    start[(i, 0)] + t * (end[(i, 0)] - start[(i, 0)])
                };
            }
        }
        LatentCurve::new(pts)
    }

    pub fn points(&self) -> &RealArray {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    pub fn segments(&self) -> usize {
        self.points.cols() - 1
    }

    /// Segment midpoints and increments, both `m x n`.
    fn midpoints_and_steps(&self) -> (RealArray, RealArray) {
        let n = self.segments();
        let left = self.points.select_cols(&(0..n).collect::<Vec<_>>());
        let right = self.points.select_cols(&(1..=n).collect::<Vec<_>>());
        (left.add(&right).scale(0.5), right.sub(&left))
    }

    fn with_interior(&self, interior: &RealArray) -> LatentCurve {
        let n = self.segments();
        let mut pts = self.points.clone();
        for k in 1..n {
            pts.set_col(k, &interior.col(k - 1));
        }
        LatentCurve { points: pts }
    }

    fn interior(&self) -> RealArray {
        self.points
            .select_cols(&(1..self.segments()).collect::<Vec<_>>())
    }
}

fn check_curve(dec: &(impl MapDims + ?Sized), curve: &LatentCurve) -> Result<()> {
    if curve.dim() != dec.input_dim() {
        return Err(Error::dim("curve dimension", dec.input_dim(), curve.dim()));
    }
    Ok(())
}

/// Per-segment `Δᵀ G(mid) Δ` values; optionally rank-checks each midpoint.
fn segment_forms<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    curve: &LatentCurve,
    h: &AmbientMetric,
    check_rank: bool,
) -> Result<Vec<f64>> {
    check_curve(dec, curve)?;
    let (mid, step) = curve.midpoints_and_steps();
    if check_rank {
        let m = curve.dim();
        let n = curve.segments();
        let idx: Vec<usize> = (0..n).flat_map(|s| std::iter::repeat_n(s, m)).collect();
        let seeds = RealArray::hcat(&vec![RealArray::identity(m); n]);
        let out = eval(dec, &Dual::new(mid.select_cols(&idx), seeds)?);
        for s in 0..n {
            let j = out
                .tan()
                .select_cols(&(s * m..(s + 1) * m).collect::<Vec<_>>());
            linalg::check_full_rank(&j).map_err(|e| e.context(format!("curve segment {s}")))?;
        }
    }
    let out = eval(dec, &Dual::new(mid, step)?);
    h.quad_forms(out.val(), out.tan())
}

/// Midpoint-rule length `Σ √(Δᵀ G Δ)`.
pub fn curve_length<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    curve: &LatentCurve,
    h: &AmbientMetric,
) -> Result<f64> {
    Ok(segment_forms(dec, curve, h, true)?
        .iter()
        .map(|q| q.max(0.0).sqrt())
        .sum())
}

/// Midpoint-rule energy `n Σ Δᵀ G Δ` (each segment spans `1/n` of parameter time).
pub fn curve_energy<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    curve: &LatentCurve,
    h: &AmbientMetric,
) -> Result<f64> {
    let n = curve.segments() as f64;
    Ok(n * segment_forms(dec, curve, h, true)?.iter().sum::<f64>())
}

/// Discrete energy and its gradient with respect to the interior points.
fn energy_gradient<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    curve: &LatentCurve,
    h: &AmbientMetric,
) -> Result<(f64, RealArray)> {
    let (mid, step) = curve.midpoints_and_steps();
    let m = curve.dim();
    let n = curve.segments();
    // column s·m + i: point mid_s, inner seed eᵢ, outer seed Δ_s
    let idx: Vec<usize> = (0..n).flat_map(|s| std::iter::repeat_n(s, m)).collect();
    let inner = RealArray::hcat(&vec![RealArray::identity(m); n]);
    let outer = step.select_cols(&idx);
    let zero = RealArray::zeros(m, n * m);
    let x = Dual::new(
        Dual::new(mid.select_cols(&idx), inner)?,
        Dual::new(outer, zero)?,
    )?;
    let y = eval(dec, &x);
    let f_mid = y.val().val();
    let jac_cols = y.val().tan();
    let jd = y.tan().val();
    let hess = y.tan().tan();

    let mut energy = 0.0;
    let mut seg_grad = RealArray::zeros(m, n); // 2 G Δ_s
    let mut mid_grad = RealArray::zeros(m, n); // ∇_mid (Δ_sᵀ G Δ_s)
    for s in 0..n {
        let cols: Vec<usize> = (s * m..(s + 1) * m).collect();
        let j = jac_cols.select_cols(&cols);
        linalg::check_full_rank(&j).map_err(|e| e.context(format!("curve segment {s}")))?;
        let x_s = f_mid.select_cols(&[s * m]);
        let v = jd.select_cols(&[s * m]);
        let hv: RealArray = h.apply(&x_s, &v)?;
        energy += v.dot(&hv);
        let ghv = j.t_matmul(&hv);
        for i in 0..m {
            seg_grad[(i, s)] = 2.0 * ghv[(i, 0)];
            let dv = hess.select_cols(&[s * m + i]);
            let mut g = 2.0 * dv.dot(&hv);
            if let AmbientMetric::Field(_) = h {
                let eps = 1e-5;
                let ji = j.select_cols(&[i]);
                let hp = h.at(&x_s.add(&ji.scale(eps)).col(0))?;
                let hm = h.at(&x_s.sub(&ji.scale(eps)).col(0))?;
                let dh = hp.sub(&hm).scale(0.5 / eps);
                g += v.dot(&dh.matmul(&v));
            }
            mid_grad[(i, s)] = g;
        }
    }
    let nf = n as f64;
    let mut grad = RealArray::zeros(m, n.saturating_sub(1));
    for k in 1..n {
        for i in 0..m {
            grad[(i, k - 1)] = nf
                * (seg_grad[(i, k - 1)] - seg_grad[(i, k)]
                    + 0.5 * (mid_grad[(i, k - 1)] + mid_grad[(i, k)]));
        }
    }
    Ok((nf * energy, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    /// Number of curve segments.
    pub segments: usize,
    pub max_iters: usize,
    /// Initial gradient-descent step; adapted by the line search.
    pub step: f64,
    /// Stop once the energy gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            segments: 32,
            max_iters: 2000,
            step: 1.0,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub curve: LatentCurve,
    pub energy: f64,
    pub length: f64,
    /// Norm of the energy gradient on the interior points at exit.
    pub grad_norm: f64,
    pub iterations: usize,
    /// False when the iteration cap or a stalled line search ended the run.
    pub converged: bool,
}

/// Fixed-endpoint energy minimization by gradient descent with Armijo
/// backtracking, starting from the straight chord.
pub fn geodesic<M: Chart<RealArray> + ?Sized>(
    dec: &M,
    start: &RealArray,
    end: &RealArray,
    h: &AmbientMetric,
    opts: &GeodesicOptions,
) -> Result<Geodesic> {
    if start.rows() != dec.input_dim() || start.cols() != 1 || !start.same_shape(end) {
        return Err(Error::dim(
            "geodesic endpoints",
            format!("{} x 1", dec.input_dim()),
            format!("{:?} and {:?}", start.shape(), end.shape()),
        ));
    }
    if start.max_abs_diff(end) == 0.0 {
        return Err(Error::InvalidArgument(
            "geodesic endpoints must be distinct".into(),
        ));
    }
    if !(opts.step > 0.0) || !(opts.tolerance > 0.0) {
        return Err(Error::InvalidArgument(
            "geodesic step and tolerance must be positive".into(),
        ));
    }
    let mut curve = LatentCurve::chord(start, end, opts.segments)?;
    let (mut energy, mut grad) = energy_gradient(dec, &curve, h)?;
    let mut step = opts.step;
    let mut iterations = 0;
    let mut stalled = false;
    while grad.norm() >= opts.tolerance && iterations < opts.max_iters {
        let g2 = grad.dot(&grad);
        let x = curve.interior();
        let mut t = step;
        let accepted = loop {
            let trial = curve.with_interior(&x.sub(&grad.scale(t)));
            let e =
                segment_forms(dec, &trial, h, false)?.iter().sum::<f64>() * opts.segments as f64;
            if e.is_finite() && e <= energy - 1e-4 * t * g2 {
                break Some(trial);
            }
            t *= 0.5;
            if t < 1e-30 {
                break None;
            }
        };
        match accepted {
            Some(trial) => {
                curve = trial;
                (energy, grad) = energy_gradient(dec, &curve, h)?;
                step = t * 2.0;
                iterations += 1;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    let grad_norm = grad.norm();
    let length = curve_length(dec, &curve, h)?;
    Ok(Geodesic {
        converged: grad_norm < opts.tolerance && !stalled,
        curve,
        energy,
        length,
        grad_norm,
        iterations,
    })
}

/// Writes `t, z1..zm, x1..xD` rows plus a footer with length, energy and
/// convergence status.
pub fn write_geodesic_csv<M: Chart<RealArray> + ?Sized, W: Write>(
    dec: &M,
    geo: &Geodesic,
    out: W,
) -> Result<()> {
    let pts = geo.curve.points();
    let x: RealArray = eval(dec, pts);
    let m = pts.rows();
    let d = x.rows();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("z{i}")));
    header.extend((1..=d).map(|i| format!("x{i}")));
    let mut table = Table::new(header);
    let n = geo.curve.segments();
    for k in 0..=n {
        let mut row = vec![k as f64 / n as f64];
        row.extend(pts.col(k));
        row.extend(x.col(k));
        table.push_row(row);
    }
    table
        .footer("length", geo.length)
        .footer("energy", geo.energy)
        .footer("grad_norm", geo.grad_norm)
        .footer("iterations", geo.iterations)
        .footer("converged", geo.converged)
        .write(out)
}
