use geomae::data::{
    gen_circle, gen_sine_curve, gen_square_with_hole, knn_graph, sample_square_with_hole, Dataset,
};
use geomae::regularizers::Bandwidth;
use geomae::RealArray;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dist2(x: &RealArray, a: usize, b: usize) -> f64 {
    x.col(a)
        .iter()
        .zip(x.col(b))
        .map(|(p, q)| (p - q).powi(2))
        .sum()
}

#[test]
fn knn_matches_exhaustive_ranking() {
    let ds = gen_square_with_hole(150, 2.0, 0.8, 0.05, 3).unwrap();
    let k = 7;
    let g = knn_graph(&ds, k, Bandwidth::Auto).unwrap();
    let x = ds.points();
    for i in 0..ds.len() {
        let nb = g.neighbors(i);
        assert_eq!(nb.len(), k + 1);
        assert_eq!(nb[0], i);
        let mut all: Vec<(f64, usize)> = (0..ds.len())
            .filter(|&j| j != i)
            .map(|j| (dist2(x, i, j), j))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
        assert_eq!(&nb[1..], &expect[..]);
        assert_eq!(g.weights(i)[0], 1.0);
    }
    // the Gaussian kernel is symmetric on mutual pairs
    for i in 0..ds.len() {
        for (p, &j) in g.neighbors(i).iter().enumerate().skip(1) {
            if let Some(q) = g.neighbors(j).iter().position(|&t| t == i) {
                assert_eq!(g.weights(i)[p], g.weights(j)[q]);
            }
        }
    }
}

#[test]
fn auto_bandwidth_is_mean_kth_distance() {
    let ds = gen_circle(60, 1.0, 0.02, 5).unwrap();
    let g = knn_graph(&ds, 4, Bandwidth::Auto).unwrap();
    let x = ds.points();
    let mean = (0..60)
        .map(|i| dist2(x, i, g.neighbors(i)[4]).sqrt())
        .sum::<f64>()
        / 60.0;
    assert!((g.bandwidth() - mean).abs() < 1e-14);
}

#[test]
fn sine_residuals_have_the_requested_noise() {
    let (a, w, s) = (1.3, 2.0, 0.05);
    let ds = gen_sine_curve(20_000, a, w, s, 6).unwrap();
    let t = ds.latent().unwrap();
    let x = ds.points();
    let mut r = Vec::new();
    for j in 0..ds.len() {
        r.push(x[(0, j)] - t[(0, j)]);
        r.push(x[(1, j)] - a * (w * t[(0, j)]).sin());
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    assert!(mean.abs() < 1.5e-3);
    assert!((sd - s).abs() < 0.02 * s, "{sd}");
    let tmean = t.data().iter().sum::<f64>() / t.len() as f64;
    assert!(tmean.abs() < 0.02 && t.data().iter().all(|v| (-1.0..1.0).contains(v)));
}

#[test]
fn square_acceptance_matches_area_ratio() {
    for (outer, hole) in [(2.0, 0.8), (2.0, 1.5), (1.0, 0.1)] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (uv, attempts) = sample_square_with_hole(20_000, outer, hole, &mut rng).unwrap();
        let expect = 1.0 - (hole / outer) * (hole / outer);
        let rate = 20_000.0 / attempts as f64;
        assert!(
            (rate - expect).abs() < 0.01,
            "{outer} {hole}: {rate} vs {expect}"
        );
        for j in 0..uv.cols() {
            let (u, v) = (uv[(0, j)], uv[(1, j)]);
            assert!(u.abs() <= outer / 2.0 && v.abs() <= outer / 2.0);
            assert!(u.abs() >= hole / 2.0 || v.abs() >= hole / 2.0);
        }
    }
}

#[test]
fn degenerate_square_is_rejected() {
    assert!(gen_square_with_hole(10, 1.0, 1.0, 0.0, 1).is_err());
    assert!(gen_square_with_hole(10, 1.0, 0.0, 0.0, 1).is_err());
}

#[test]
fn saved_datasets_reload_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_square_with_hole(40, 2.0, 0.8, 0.01, 9).unwrap();
    let path = dir.path().join("sq.csv");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.points(), ds.points());
    assert_eq!(back.latent(), ds.latent());
    assert_eq!(back.provenance(), ds.provenance());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>(), n in 2usize..50) {
        prop_assert_eq!(gen_sine_curve(n, 1.0, 2.0, 0.05, seed).unwrap(), gen_sine_curve(n, 1.0, 2.0, 0.05, seed).unwrap());
        prop_assert_eq!(gen_circle(n, 0.7, 0.01, seed).unwrap(), gen_circle(n, 0.7, 0.01, seed).unwrap());
    }

    #[test]
    fn graphs_are_self_inclusive_and_in_range(seed in any::<u64>(), k in 1usize..6) {
        let ds = gen_circle(30, 1.0, 0.05, seed).unwrap();
        let g = knn_graph(&ds, k, Bandwidth::Fixed(0.3)).unwrap();
        for i in 0..30 {
            prop_assert_eq!(g.neighbors(i)[0], i);
            prop_assert!(g.neighbors(i).iter().all(|&j| j < 30));
            prop_assert!(g.weights(i).iter().all(|&w| w > 0.0));
        }
    }
}
