//! Trainable regularization losses and the stochastic estimators behind them.
//!
//! Each loss is generic over [`Tensor`]: called with plain arrays it returns
//! the value, called with tape variables it builds a graph whose gradient
//! flows to every encoder and decoder weight. Random probes are drawn up front
//! (see [`ProbeStream`]) so the value and gradient paths see identical noise.

mod irae;
mod mecae;
mod nrae;

pub use irae::{
    irae_distortion_estimate, irae_exact_ratio, irae_loss, irae_probe_means, irae_ratio, IraeProbes,
};
pub use mecae::{mecae_curvature_estimate, mecae_estimates, mecae_loss, MecaeProbes};
pub use nrae::{local_quadratic_approx, nrae_loss, Approximation, Bandwidth, NraeConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::autodiff::{SmoothMap, Tensor};
use crate::error::{Error, Result};

/// Probe counts and seed for the stochastic trace estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Ambient probes `w` per MECAE estimate.
    pub k: usize,
    /// Latent probes `v` per estimate (MECAE and IRAE).
    pub l: usize,
    /// IRAE: reuse `v` as `w`.
    pub tie_probes: bool,
    /// IRAE: normalize each sample by its own denominator instead of the
    /// batch mean.
    pub per_sample: bool,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k: 1,
            l: 1,
            tie_probes: false,
            per_sample: false,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::Config(format!(
                "estimator probe counts must be at least 1 (k={}, l={})",
                self.k, self.l
            )));
        }
        Ok(())
    }
}

/// Deterministic probe noise for one optimizer step. Every batch sample gets
/// its own ChaCha stream keyed by `(seed, step, sample, purpose)`, so draws do
/// not depend on evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeStream {
    pub seed: u64,
    pub step: u64,
}

impl ProbeStream {
    pub fn new(seed: u64, step: u64) -> Self {
        ProbeStream { seed, step }
    }

    pub fn rng(&self, sample: usize, purpose: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.step.to_le_bytes());
        key[16..24].copy_from_slice(&(sample as u64).to_le_bytes());
        key[24..].copy_from_slice(&purpose.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> RealArray {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    RealArray::from_matrix(rows, cols, data)
}

/// Hutchinson estimate `(1/n) Σ vₖᵀ A vₖ` of `Tr A` with standard normal
/// probes; `matvec` must be linear.
pub fn hutchinson_trace<R: Rng + ?Sized>(
    mut matvec: impl FnMut(&[f64]) -> Vec<f64>,
    dim: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "hutchinson_trace needs dim, n_samples >= 1".into(),
        ));
    }
    let mut total = 0.0;
    for _ in 0..n_samples {
        let v = gaussian(rng, dim, 1).into_data();
        let av = matvec(&v);
        if av.len() != dim {
            return Err(Error::dim("hutchinson matvec output", dim, av.len()));
        }
        total += v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total / n_samples as f64)
}

/// `(1/B) Σ ‖F(x) − x‖²` over the columns of `batch`.
pub fn reconstruction_loss<T, E, D>(encoder: &E, decoder: &D, batch: &T) -> T
where
    T: Tensor,
    E: SmoothMap<T> + ?Sized,
    D: SmoothMap<T> + ?Sized,
{
    let z = encoder.apply(batch);
    let r = decoder.apply(&z).sub(batch);
    r.square().sum().scale(1.0 / batch.cols() as f64)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    Ok(())
}
