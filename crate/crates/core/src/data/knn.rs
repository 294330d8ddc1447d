use crate::error::{Error, Result};
use crate::regularizers::Bandwidth;

use super::Dataset;

/// Per-point neighbor lists (self first, then by increasing distance) with
/// Gaussian kernel weights `exp(−‖x′ − x‖² / σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodGraph {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl NeighborhoodGraph {
    /// Builds a graph from explicit lists, checking self-inclusion, index
    /// range and positive weights.
    pub fn from_lists(
        neighbors: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
        bandwidth: f64,
    ) -> Result<Self> {
        let n = neighbors.len();
        if weights.len() != n {
            return Err(Error::dim("neighborhood weights", n, weights.len()));
        }
        for (i, (nb, w)) in neighbors.iter().zip(&weights).enumerate() {
            if nb.first() != Some(&i) {
                return Err(Error::InvalidArgument(format!(
                    "neighborhood {i} must start with the point itself"
                )));
            }
            if nb.len() != w.len() {
                return Err(Error::dim("neighborhood weight count", nb.len(), w.len()));
            }
            if let Some(&bad) = nb.iter().find(|&&j| j >= n) {
                return Err(Error::InvalidArgument(format!(
                    "neighbor index {bad} out of range in neighborhood {i}"
                )));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "neighborhood {i} has a nonpositive weight"
                )));
            }
        }
        Ok(NeighborhoodGraph {
            neighbors,
            weights,
            bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn get(&self, i: usize) -> Option<(&[usize], &[f64])> {
        Some((
            self.neighbors.get(i)?.as_slice(),
            self.weights[i].as_slice(),
        ))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }
}

/// Brute-force Euclidean k-nearest neighbors with the point itself prepended
/// (lists have `k + 1` entries). Ties go to the lower index. `Bandwidth::Auto`
/// uses the mean distance to the k-th neighbor.
pub fn knn_graph(dataset: &Dataset, k: usize, bandwidth: Bandwidth) -> Result<NeighborhoodGraph> {
    let n = dataset.len();
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} neighbors needs more than {n} points"
        )));
    }
    let x = dataset.points();
    let d = x.rows();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| x.col(j)).collect();
    let dist2 =
        |a: usize, b: usize| -> f64 { (0..d).map(|r| (cols[a][r] - cols[b][r]).powi(2)).sum() };

    let mut lists = Vec::with_capacity(n);
    let mut sq = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist2(i, j), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        let mut nb = vec![i];
        let mut ds = vec![0.0];
        for (dd, j) in cand {
            nb.push(j);
            ds.push(dd);
        }
        lists.push(nb);
        sq.push(ds);
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "kernel bandwidth must be positive, got {s}"
                )));
            }
            s
        }
        Bandwidth::Auto if k == 0 => 1.0,
        Bandwidth::Auto => {
            let s = sq.iter().map(|ds| ds[k].sqrt()).sum::<f64>() / n as f64;
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(
                    "automatic bandwidth is zero: duplicated points".into(),
                ));
            }
            s
        }
    };
    let weights = sq
        .iter()
        .map(|ds| {
            ds.iter()
                .map(|dd| (-dd / (sigma * sigma)).exp().max(f64::MIN_POSITIVE))
                .collect()
        })
        .collect();
    NeighborhoodGraph::from_lists(lists, weights, sigma)
}
