//! Random networks, finite-difference oracles and shared property checks.
//! Also compiled into the CLI crate's acceptance target.
#![allow(dead_code)]

use geomae::autodiff::{jvp, mlp_forward, second_directional, vjp, Activation, MlpParams};
use geomae::geometry::{
    local_extrinsic_curvature, relaxed_distortion_exact, relaxed_distortion_in, tangent_projector,
    AmbientMetric,
};
use geomae::RealArray;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng, rows: usize, cols: usize) -> RealArray {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    RealArray::from_matrix(rows, cols, data)
}

/// Glorot weights with random biases so no layer is centered at zero.
pub fn random_net(rng: &mut impl Rng, widths: &[usize], act: Activation) -> MlpParams {
    let net = MlpParams::init(widths, act, rng).unwrap();
    let mut flat = net.flat();
    let mut offset = 0;
    for l in net.layers() {
        offset += l.weight.len();
        for b in &mut flat[offset..offset + l.bias.len()] {
            *b = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        offset += l.bias.len();
    }
    net.with_flat(&flat).unwrap()
}

/// A random smooth decoder `R^m -> R^d` with one or two hidden layers.
pub fn random_decoder(rng: &mut impl Rng, m: usize, d: usize) -> MlpParams {
    let mut widths = vec![m];
    for _ in 0..rng.random_range(1..=2) {
        widths.push(rng.random_range(4..=16));
    }
    widths.push(d);
    let act = if rng.random_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Softplus
    };
    random_net(rng, &widths, act)
}

pub fn rel_err(a: &RealArray, b: &RealArray) -> f64 {
    a.sub(b).norm() / b.norm().max(1e-8)
}

pub fn fd_jvp(f: &MlpParams, z: &RealArray, v: &RealArray, h: f64) -> RealArray {
    let p = mlp_forward(f, &z.add(&v.scale(h))).unwrap();
    let q = mlp_forward(f, &z.sub(&v.scale(h))).unwrap();
    p.sub(&q).scale(0.5 / h)
}

pub fn fd_second(f: &MlpParams, z: &RealArray, v: &RealArray, h: f64) -> RealArray {
    let p = mlp_forward(f, &z.add(&v.scale(h))).unwrap();
    let c = mlp_forward(f, z).unwrap();
    let q = mlp_forward(f, &z.sub(&v.scale(h))).unwrap();
    p.add(&q).sub(&c.scale(2.0)).scale(1.0 / (h * h))
}

/// `Jᵀ u` at a single point, one coordinate at a time from central differences.
pub fn fd_vjp(f: &MlpParams, z: &RealArray, u: &RealArray, h: f64) -> RealArray {
    let m = z.rows();
    let mut out = RealArray::zeros(m, 1);
    for i in 0..m {
        let mut e = RealArray::zeros(m, 1);
        e[(i, 0)] = 1.0;
        out[(i, 0)] = fd_jvp(f, z, &e, h).dot(u);
    }
    out
}

#[derive(Debug, Default)]
pub struct DiffReport {
    pub nets: usize,
    pub jvp: f64,
    pub vjp: f64,
    pub second: f64,
    pub adjoint: f64,
}

/// Compares jvp, vjp and second_directional with central differences on
/// `nets` random networks (`m ≤ 3`, `D ≤ 10`) and checks `uᵀ(Jv) = (Jᵀu)ᵀv`.
/// Reports the worst relative errors.
pub fn differentiation_check(nets: usize, seed: u64) -> DiffReport {
    let mut r = rng(seed);
    let mut rep = DiffReport {
        nets,
        ..Default::default()
    };
    for _ in 0..nets {
        let m = r.random_range(1..=3);
        let d = r.random_range(m + 1..=10);
        let f = random_decoder(&mut r, m, d);
        let z = normal(&mut r, m, 1).scale(0.7);
        let v = normal(&mut r, m, 1);
        let u = normal(&mut r, d, 1);
        let (_, jv) = jvp(&f, &z, &v).unwrap();
        let (_, jtu) = vjp(&f, &z, &u).unwrap();
        let hv = second_directional(&f, &z, &v).unwrap();
        rep.jvp = rep.jvp.max(rel_err(&jv, &fd_jvp(&f, &z, &v, 1e-5)));
        rep.vjp = rep.vjp.max(rel_err(&jtu, &fd_vjp(&f, &z, &u, 1e-5)));
        rep.second = rep.second.max(rel_err(&hv, &fd_second(&f, &z, &v, 1e-3)));
        let (lhs, rhs) = (u.dot(&jv), jtu.dot(&v));
        rep.adjoint = rep
            .adjoint
            .max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    rep
}

/// A random invertible `m x m` map with condition number below 20.
pub fn random_invertible(rng: &mut impl Rng, m: usize) -> RealArray {
    loop {
        let a = normal(rng, m, m);
        let sv = geomae::linalg::singular_values(&a);
        if sv[0] > 0.0 && sv[m - 1] / sv[0] < 20.0 {
            return a;
        }
    }
}

#[derive(Debug, Default)]
pub struct InvarianceReport {
    pub trials: usize,
    pub projector: f64,
    pub curvature: f64,
    pub relaxed: f64,
    pub relaxed_orthogonal: f64,
}

/// For random decoders `f` and invertible `A`, compares `f` at `z` with
/// `f ∘ A` at `A⁻¹ z`. Relaxed distortion is compared with the latent metric
/// carried along (`AᵀA`), and, with the identity latent metric, under scaled
/// orthogonal `A`. Reports the worst relative differences.
pub fn invariance_check(trials: usize, seed: u64) -> InvarianceReport {
    let mut r = rng(seed);
    let mut rep = InvarianceReport {
        trials,
        ..Default::default()
    };
    let h = AmbientMetric::Identity;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    for _ in 0..trials {
        let m = r.random_range(1..=3);
        let d = r.random_range(m + 1..=6);
        let f = random_decoder(&mut r, m, d);
        let a = random_invertible(&mut r, m);
        let g = f.precompose_linear(&a).unwrap();
        let z = normal(&mut r, m, 5).scale(0.7);
        let w = geomae::linalg::solve(&a, &z);
        for j in 0..z.cols() {
            let (zj, wj) = (z.select_cols(&[j]), w.select_cols(&[j]));
            let p = tangent_projector(&f, &zj).unwrap();
            let q = tangent_projector(&g, &wj).unwrap();
            rep.projector = rep.projector.max(p.max_abs_diff(&q));
            let c1 = local_extrinsic_curvature(&f, &zj, &h).unwrap();
            let c2 = local_extrinsic_curvature(&g, &wj, &h).unwrap();
            rep.curvature = rep.curvature.max(rel(c2, c1));
        }
        let base = relaxed_distortion_exact(&f, &z, &h).unwrap();
        let moved = relaxed_distortion_in(&g, &w, &h, &a.t_matmul(&a)).unwrap();
        rep.relaxed = rep.relaxed.max(rel(moved, base));
        // scaled orthogonal factor of A
        let q = orthonormalize(&a).scale(r.random_range(0.5..2.0));
        let gq = f.precompose_linear(&q).unwrap();
        let wq = geomae::linalg::solve(&q, &z);
        let rq = relaxed_distortion_exact(&gq, &wq, &h).unwrap();
        rep.relaxed_orthogonal = rep.relaxed_orthogonal.max(rel(rq, base));
    }
    rep
}

/// Gram-Schmidt on the columns of a square invertible matrix.
pub fn orthonormalize(a: &RealArray) -> RealArray {
    let m = a.cols();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut c = a.col(j);
        for q in &cols {
            let p: f64 = c.iter().zip(q).map(|(x, y)| x * y).sum();
            c.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
        }
        let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x /= n);
        cols.push(c);
    }
    RealArray::from_columns(&cols)
}

/// Mean MECAE estimate over `draws` independent single-probe draws at `z`.
pub fn mecae_mean(dec: &MlpParams, z: &RealArray, draws: usize, seed: u64) -> f64 {
    use geomae::regularizers::{mecae_estimates, EstimatorConfig, MecaeProbes};
    let zr = z.select_cols(&vec![0; draws]);
    let probes = MecaeProbes::draw(
        &mut rng(seed),
        draws,
        dec.out_dim(),
        z.rows(),
        &EstimatorConfig::default(),
    );
    let est = mecae_estimates(dec, &zr, &AmbientMetric::Identity, &probes).unwrap();
    est.iter().map(|e| e.item()).sum::<f64>() / draws as f64
}

/// Relative errors of the MECAE probe mean (`draws` draws) against the exact
/// local extrinsic curvature, on random decoders with `m = 1, 2, 3`.
pub fn mecae_fidelity(draws: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (1..=3)
        .map(|m| {
            let dec = random_decoder(&mut r, m, m + 3);
            let z = normal(&mut r, m, 1).scale(0.5);
            let exact = local_extrinsic_curvature(&dec, &z, &AmbientMetric::Identity).unwrap();
            (mecae_mean(&dec, &z, draws, r.random()) - exact).abs() / exact
        })
        .collect()
}

/// Relative errors of the IRAE numerator and denominator probe means
/// (`draws` probe columns in total over a 5-point batch) against the batch
/// means of `Tr(G²)` and `Tr G`, for `m = 1, 2, 3`.
/// Relative errors of the IRAE probe means against exact traces, with the
/// relative standard errors implied by standard-normal probes.
pub struct IraeFidelity {
    pub num_err: f64,
    pub den_err: f64,
    pub num_se: f64,
    pub den_se: f64,
}

pub fn irae_fidelity(draws: usize, seed: u64) -> Vec<IraeFidelity> {
    use geomae::geometry::pullback_metric;
    use geomae::regularizers::{irae_probe_means, EstimatorConfig, IraeProbes};
    let mut r = rng(seed);
    let h = AmbientMetric::Identity;
    (1..=3)
        .map(|m| {
            let dec = random_decoder(&mut r, m, m + 3);
            let z = normal(&mut r, m, 5).scale(0.6);
            let (mut tr, mut tr2, mut var_num, mut var_den) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..5 {
                let g = pullback_metric(&dec, &z.select_cols(&[j]), &h).unwrap();
                let g2 = g.matmul(&g);
                tr += g.trace() / 5.0;
                tr2 += g2.trace() / 5.0;
                // Var(v^T A v) = 2 Tr(A^2) for v ~ N(0, I)
                var_num += 2.0 * g2.matmul(&g2).trace();
                var_den += 2.0 * g2.trace();
            }
            let per_point = (draws / 5) as f64;
            let cfg = EstimatorConfig {
                l: draws / 5,
                ..EstimatorConfig::default()
            };
            let probes = IraeProbes::draw(&mut r, 5, m, &cfg);
            let (num, den) = irae_probe_means(&dec, &z, &h, &probes).unwrap();
            IraeFidelity {
                num_err: (num - tr2).abs() / tr2,
                den_err: (den - tr).abs() / tr,
                num_se: (var_num / (25.0 * per_point)).sqrt() / tr2,
                den_se: (var_den / (25.0 * per_point)).sqrt() / tr,
            }
        })
        .collect()
}

/// Residual shrink factors of the quadratic local model over a halving
/// ladder `‖dz‖ = 0.1, 0.05, …` (4 ratios per net).
pub fn taylor_ladder(nets: usize, seed: u64) -> Vec<Vec<f64>> {
    use geomae::regularizers::{local_quadratic_approx, Approximation};
    let mut r = rng(seed);
    (0..nets)
        .map(|_| {
            let m = r.random_range(1..=3);
            let dec = random_decoder(&mut r, m, m + 3);
            let z = normal(&mut r, m, 1).scale(0.5);
            let mut dz = normal(&mut r, m, 1);
            dz = dz.scale(0.1 / dz.norm());
            let mut res = Vec::new();
            for _ in 0..5 {
                let approx =
                    local_quadratic_approx(&dec, &z, &dz, Approximation::Quadratic).unwrap();
                res.push(mlp_forward(&dec, &z.add(&dz)).unwrap().sub(&approx).norm());
                dz = dz.scale(0.5);
            }
            res.windows(2).map(|w| w[0] / w[1]).collect()
        })
        .collect()
}
