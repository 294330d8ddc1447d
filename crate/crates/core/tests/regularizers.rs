mod common;

use common::{
    irae_fidelity, mecae_fidelity, normal, random_decoder, random_net, rng, taylor_ladder,
};
use geomae::autodiff::{grad_of_scalar, mlp_forward, Activation, MlpParams, ScalarGrad, SmoothMap};
use geomae::data::NeighborhoodGraph;
use geomae::geometry::AmbientMetric;
use geomae::regularizers::{
    hutchinson_trace, irae_exact_ratio, irae_loss, local_quadratic_approx, mecae_loss, nrae_loss,
    reconstruction_loss, Approximation, EstimatorConfig, IraeProbes, MecaeProbes,
};
use geomae::RealArray;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn hutchinson_recovers_a_diagonal_trace() {
    let diag = [1.0, 2.0, 3.0];
    let est = hutchinson_trace(
        |v| v.iter().zip(diag).map(|(x, d)| x * d).collect(),
        3,
        100_000,
        &mut rng(31),
    )
    .unwrap();
    assert!((est - 6.0).abs() < 0.1, "{est}");
}

#[test]
fn hutchinson_variance_matches_gaussian_theory() {
    // Var(vᵀAv) = 2 Tr(A²) for symmetric A and standard normal v
    let diag = [1.0, 2.0, 3.0];
    let mut r = rng(32);
    let draws: Vec<f64> = (0..40_000)
        .map(|_| {
            hutchinson_trace(
                |v| v.iter().zip(diag).map(|(x, d)| x * d).collect(),
                3,
                1,
                &mut r,
            )
            .unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((var - 28.0).abs() < 0.05 * 28.0, "{var}");
}

#[test]
fn mecae_estimate_converges_to_exact_curvature() {
    for err in mecae_fidelity(10_000, 33) {
        assert!(err < 0.05, "{err}");
    }
}

#[test]
fn irae_components_converge_to_metric_traces() {
    for f in irae_fidelity(10_000, 35) {
        assert!(f.num_err < 4.0 * f.num_se && f.den_err < 4.0 * f.den_se);
    }
    for f in irae_fidelity(100_000, 36) {
        assert!(
            f.num_err < 0.02 && f.den_err < 0.02,
            "{} {}",
            f.num_err,
            f.den_err
        );
    }
}

#[test]
fn quadratic_neighborhood_error_decays_cubically() {
    for ratios in taylor_ladder(10, 37) {
        assert!(
            ratios.iter().all(|r| (6.0..=10.0).contains(r)),
            "{ratios:?}"
        );
    }
}

#[test]
fn linear_neighborhood_error_decays_quadratically() {
    let mut r = rng(38);
    let dec = random_decoder(&mut r, 2, 4);
    let z = normal(&mut r, 2, 1).scale(0.5);
    let mut dz = RealArray::column(&[0.1, -0.05]);
    let mut last = None;
    for _ in 0..5 {
        let approx = local_quadratic_approx(&dec, &z, &dz, Approximation::Linear).unwrap();
        let res = mlp_forward(&dec, &z.add(&dz)).unwrap().sub(&approx).norm();
        if let Some(prev) = last {
            let ratio: f64 = prev / res;
            assert!((3.0..=5.0).contains(&ratio), "{ratio}");
        }
        last = Some(res);
        dz = dz.scale(0.5);
    }
}

fn ring_graph(n: usize, k: usize) -> NeighborhoodGraph {
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..k).map(|o| (i + o) % n).collect())
        .collect();
    let weights = (0..n)
        .map(|i| (0..k).map(|o| 1.0 / (1.0 + (o + i % 3) as f64)).collect())
        .collect();
    NeighborhoodGraph::from_lists(neighbors, weights, 1.0).unwrap()
}

#[test]
fn nrae_is_invariant_to_batch_and_neighbor_order() {
    let mut r = rng(39);
    let enc = random_net(&mut r, &[3, 6, 2], Activation::Tanh);
    let dec = random_net(&mut r, &[2, 6, 3], Activation::Tanh);
    let x = normal(&mut r, 3, 12);
    let graph = ring_graph(12, 4);
    let batch: Vec<usize> = vec![0, 3, 5, 7, 11];
    for order in [Approximation::Linear, Approximation::Quadratic] {
        let base = nrae_loss(&enc, &dec, &x, &batch, &graph, order)
            .unwrap()
            .item();
        let mut shuffled = batch.clone();
        shuffled.shuffle(&mut r);
        let perm = nrae_loss(&enc, &dec, &x, &shuffled, &graph, order)
            .unwrap()
            .item();
        let (nb, w): (Vec<Vec<usize>>, Vec<Vec<f64>>) = (0..12)
            .map(|i| {
                let (n, w) = graph.get(i).unwrap();
                let mut pairs: Vec<(usize, f64)> =
                    n.iter().copied().zip(w.iter().copied()).collect();
                pairs[1..].reverse();
                pairs.into_iter().unzip()
            })
            .unzip();
        let flipped = NeighborhoodGraph::from_lists(nb, w, 1.0).unwrap();
        let reordered = nrae_loss(&enc, &dec, &x, &batch, &flipped, order)
            .unwrap()
            .item();
        assert!((perm - base).abs() <= 1e-14 * base);
        assert!((reordered - base).abs() <= 1e-14 * base);
    }
}

#[test]
fn nrae_hand_oracle() {
    // encoder keeps x₁, decoder z ↦ (z, 0): every neighbor loses exactly x₂²
    let enc = MlpParams::linear(
        RealArray::from_matrix(1, 2, vec![1.0, 0.0]),
        RealArray::zeros(1, 1),
    )
    .unwrap();
    let dec = MlpParams::linear(RealArray::column(&[1.0, 0.0]), RealArray::zeros(2, 1)).unwrap();
    let x = RealArray::from_matrix(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
    let kern = 0.25;
    let graph = NeighborhoodGraph::from_lists(
        vec![vec![0, 1], vec![1, 0]],
        vec![vec![1.0, kern], vec![1.0, kern]],
        1.0,
    )
    .unwrap();
    for order in [Approximation::Linear, Approximation::Quadratic] {
        let loss = nrae_loss(&enc, &dec, &x, &[0, 1], &graph, order)
            .unwrap()
            .item();
        assert!((loss - (kern + 1.0) / 4.0).abs() < 1e-15, "{loss}");
    }
}

#[test]
fn mecae_and_irae_vanish_on_flat_isometric_decoders() {
    let enc = MlpParams::linear(
        RealArray::from_matrix(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        RealArray::zeros(2, 1),
    )
    .unwrap();
    let dec = MlpParams::linear(
        RealArray::from_matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        RealArray::zeros(3, 1),
    )
    .unwrap()
    .scale_output(2.5);
    let mut r = rng(40);
    let x = normal(&mut r, 3, 6);
    let h = AmbientMetric::Identity;
    let cfg = EstimatorConfig {
        k: 3,
        l: 3,
        ..EstimatorConfig::default()
    };
    let recon = reconstruction_loss(&enc, &dec, &x).item();
    let mp = MecaeProbes::draw(&mut r, 6, 3, 2, &cfg);
    let me = mecae_loss(&enc, &dec, &x, &h, 1.0, &mp).unwrap().item();
    assert!((me - recon).abs() < 1e-12);
    let z = enc.apply(&x);
    assert!(irae_exact_ratio(&dec, &z, &h).unwrap().item().abs() < 1e-12);
    // the loss leaves out the m² scale and −m shift: a scaled isometry gives R = 1/m in expectation
    let many = EstimatorConfig { l: 4000, ..cfg };
    let ip = IraeProbes::draw(&mut r, 6, 2, &many);
    let ratio = irae_loss(&enc, &dec, &x, &h, 1.0, &ip, false)
        .unwrap()
        .item()
        - recon;
    assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
}

/// Largest relative error between `grad` and central differences of `value`
/// over `count` random parameters of either network.
fn param_fd_error(
    enc: &MlpParams,
    dec: &MlpParams,
    grad: &ScalarGrad,
    value: impl Fn(&MlpParams, &MlpParams) -> f64,
    r: &mut impl Rng,
    count: usize,
) -> f64 {
    let (fe, fd) = (enc.flat(), dec.flat());
    let (ge, gd) = (grad.encoder.flat(), grad.decoder.flat());
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let on_enc = r.random_bool(0.5);
        let (base, g) = if on_enc { (&fe, &ge) } else { (&fd, &gd) };
        let i = r.random_range(0..base.len());
        let at = |s: f64| {
            let mut p = base.clone();
            p[i] += s;
            if on_enc {
                value(&enc.with_flat(&p).unwrap(), dec)
            } else {
                value(enc, &dec.with_flat(&p).unwrap())
            }
        };
        let numeric = (at(step) - at(-step)) / (2.0 * step);
        worst = worst.max((numeric - g[i]).abs() / g[i].abs().max(numeric.abs()).max(1e-4));
    }
    worst
}

#[test]
fn regularizer_gradients_match_finite_differences() {
    let mut r = rng(41);
    let enc = random_net(&mut r, &[3, 6, 2], Activation::Tanh);
    let dec = random_net(&mut r, &[2, 6, 3], Activation::Softplus);
    let x = normal(&mut r, 3, 10);
    let h = AmbientMetric::diagonal(vec![1.0, 2.0, 0.5]).unwrap();
    let graph = ring_graph(10, 3);
    let batch = vec![1, 4, 8];
    let cfg = EstimatorConfig {
        k: 2,
        l: 2,
        ..EstimatorConfig::default()
    };
    let mp = MecaeProbes::draw(&mut r, 10, 3, 2, &cfg);
    let ip = IraeProbes::draw(&mut r, 10, 2, &cfg);

    let g = grad_of_scalar(&enc, &dec, |t, e, d| {
        nrae_loss(
            e,
            d,
            &t.constant(x.clone()),
            &batch,
            &graph,
            Approximation::Quadratic,
        )
    })
    .unwrap();
    let err = param_fd_error(
        &enc,
        &dec,
        &g,
        |e, d| {
            nrae_loss(e, d, &x, &batch, &graph, Approximation::Quadratic)
                .unwrap()
                .item()
        },
        &mut r,
        25,
    );
    assert!(err < 1e-5, "nrae {err}");

    let g = grad_of_scalar(&enc, &dec, |t, e, d| {
        mecae_loss(e, d, &t.constant(x.clone()), &h, 0.3, &mp)
    })
    .unwrap();
    let err = param_fd_error(
        &enc,
        &dec,
        &g,
        |e, d| mecae_loss(e, d, &x, &h, 0.3, &mp).unwrap().item(),
        &mut r,
        25,
    );
    assert!(err < 1e-5, "mecae {err}");

    let g = grad_of_scalar(&enc, &dec, |t, e, d| {
        irae_loss(e, d, &t.constant(x.clone()), &h, 0.3, &ip, false)
    })
    .unwrap();
    let err = param_fd_error(
        &enc,
        &dec,
        &g,
        |e, d| irae_loss(e, d, &x, &h, 0.3, &ip, false).unwrap().item(),
        &mut r,
        25,
    );
    assert!(err < 1e-5, "irae {err}");
}
