use std::io::Write;

use crate::array::RealArray;
use crate::data::{Dataset, GeneratorSpec};
use crate::error::{Error, Result};
use crate::geometry::{AmbientMetric, GeometryReport};
use crate::table::Table;

use super::Model;

/// Exact (probe-free) quality and geometry numbers for a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    /// Mean squared reconstruction norm over the training set.
    pub train_mse: f64,
    pub heldout_mse: Option<f64>,
    /// Mean local extrinsic curvature at the encoded training points.
    pub mean_curvature: f64,
    pub max_curvature: f64,
    /// Relaxed distortion over the encoded training points, with the `m²`
    /// scale and `−m` shift applied.
    pub relaxed_distortion: f64,
    pub condition_mean: f64,
    pub condition_max: f64,
    /// Mean Euclidean distance from noise-free reference samples to their
    /// reconstructions.
    pub manifold_fit: Option<f64>,
    /// Encoded points excluded from the geometry means for rank deficiency.
    pub rank_deficient: usize,
    pub points: usize,
}

impl EvalMetrics {
    /// One-row table; optional metrics that were not computed are omitted.
    pub fn to_table(&self) -> Table {
        let mut cols: Vec<(&str, f64)> = vec![("train_mse", self.train_mse)];
        if let Some(v) = self.heldout_mse {
            cols.push(("heldout_mse", v));
        }
        cols.extend([
            ("mean_curvature", self.mean_curvature),
            ("max_curvature", self.max_curvature),
            ("relaxed_distortion", self.relaxed_distortion),
            ("condition_mean", self.condition_mean),
            ("condition_max", self.condition_max),
        ]);
        if let Some(v) = self.manifold_fit {
            cols.push(("manifold_fit", v));
        }
        cols.push(("rank_deficient", self.rank_deficient as f64));
        cols.push(("points", self.points as f64));
        let mut t = Table::new(cols.iter().map(|(k, _)| k.to_string()).collect());
        t.push_row(cols.iter().map(|(_, v)| *v).collect());
        t
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.to_table().write(out)
    }
}

fn mse(model: &Model, x: &RealArray) -> f64 {
    let r = model.reconstruct(x).sub(x);
    r.data().iter().map(|v| v * v).sum::<f64>() / x.cols() as f64
}

/// The noise-free counterpart of a generated dataset (same latent draws),
/// rebuilt from its provenance. `None` when the provenance does not name a
/// known generator.
pub fn clean_reference(ds: &Dataset) -> Option<Dataset> {
    let (spec, seed): (GeneratorSpec, u64) =
        GeneratorSpec::from_provenance(ds.provenance()).ok()?;
    let clean = spec.noise_free().generate(seed).ok()?;
    let stride = ds
        .provenance_value("stride")
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let clean = if stride > 1 {
        clean.subsample(stride).ok()?
    } else {
        clean
    };
    (clean.len() == ds.len() && clean.dim() == ds.dim()).then_some(clean)
}

/// Evaluates `model` on its training set, an optional held-out set and an
/// optional noise-free reference set. Geometry is computed exactly at the
/// encoded training points under the ambient metric `h`.
pub fn evaluate(
    model: &Model,
    train: &Dataset,
    held_out: Option<&Dataset>,
    clean: Option<&Dataset>,
    h: &AmbientMetric,
) -> Result<(EvalMetrics, GeometryReport)> {
    for (name, ds) in [
        ("training", Some(train)),
        ("held-out", held_out),
        ("reference", clean),
    ] {
        if let Some(ds) = ds {
            if ds.dim() != model.encoder.in_dim() {
                return Err(
                    Error::dim("data dimension", model.encoder.in_dim(), ds.dim())
                        .context(format!("{name} set")),
                );
            }
        }
    }
    let z = model.encode(train.points());
    let report = GeometryReport::compute(&model.decoder, &z, h)?;
    let manifold_fit = clean.map(|c| {
        let r = model.reconstruct(c.points()).sub(c.points());
        (0..r.cols())
            .map(|j| r.col(j).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / r.cols() as f64
    });
    let metrics = EvalMetrics {
        train_mse: mse(model, train.points()),
        heldout_mse: held_out.map(|d| mse(model, d.points())),
        mean_curvature: report.mean_curvature,
        max_curvature: report.max_curvature,
        relaxed_distortion: report.relaxed_distortion,
        condition_mean: report.mean_condition,
        condition_max: report.max_condition,
        manifold_fit,
        rank_deficient: report.skipped.len(),
        points: train.len(),
    };
    Ok((metrics, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::MlpParams;
    use crate::data::gen_sine_curve;
    use crate::geometry::{local_extrinsic_curvature, relaxed_distortion_exact};
    use crate::trainer::{train, TrainConfig, TrainOptions};

    #[test]
    fn linear_pair_on_linear_data() {
        // x = (2t, t, 0) with encoder t = (2x₁ + x₂)/5 and decoder t ↦ (2t, t, 0)
        let n = 7;
        let mut pts = RealArray::zeros(3, n);
        for j in 0..n {
            let t = j as f64 - 3.0;
            pts[(0, j)] = 2.0 * t;
            pts[(1, j)] = t;
        }
        let ds = Dataset::new(pts, None, vec![]).unwrap();
        let enc = MlpParams::linear(
            RealArray::from_matrix(1, 3, vec![0.4, 0.2, 0.0]),
            RealArray::zeros(1, 1),
        )
        .unwrap();
        let s = 5f64.sqrt();
        let dec = MlpParams::linear(
            RealArray::column(&[2.0 / s, 1.0 / s, 0.0]),
            RealArray::zeros(3, 1),
        )
        .unwrap()
        .precompose_linear(&RealArray::from_matrix(1, 1, vec![s]))
        .unwrap();
        let model = Model {
            encoder: enc,
            decoder: dec,
        };
        let (m, _) = evaluate(&model, &ds, Some(&ds), Some(&ds), &AmbientMetric::Identity).unwrap();
        assert!(
            m.train_mse < 1e-24
                && m.heldout_mse.unwrap() < 1e-24
                && m.manifold_fit.unwrap() < 1e-12
        );
        assert!(m.mean_curvature.abs() < 1e-12);
        assert!(m.relaxed_distortion.abs() < 1e-12);
        assert_eq!(m.rank_deficient, 0);
    }

    #[test]
    fn orthonormal_decoder_has_zero_distortion() {
        let ds = gen_sine_curve(20, 1.0, 2.0, 0.0, 1).unwrap();
        let enc = MlpParams::linear(
            RealArray::from_matrix(1, 2, vec![0.6, 0.8]),
            RealArray::zeros(1, 1),
        )
        .unwrap();
        let dec = MlpParams::linear(RealArray::column(&[0.6, 0.8]), RealArray::zeros(2, 1))
            .unwrap()
            .scale_output(3.0);
        let (m, _) = evaluate(
            &Model {
                encoder: enc,
                decoder: dec,
            },
            &ds,
            None,
            None,
            &AmbientMetric::Identity,
        )
        .unwrap();
        assert!(
            m.relaxed_distortion.abs() < 1e-12,
            "{}",
            m.relaxed_distortion
        );
        assert!((m.condition_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_geometry_calls() {
        let ds = gen_sine_curve(30, 1.0, 2.0, 0.05, 4).unwrap();
        let mut c = TrainConfig::default();
        c.model.encoder_hidden = vec![8];
        c.model.decoder_hidden = vec![8];
        c.optim.batch_size = 10;
        c.optim.epochs = 2;
        let out = train(&c, &ds, &TrainOptions::default()).unwrap();
        let clean = clean_reference(&ds).unwrap();
        assert_eq!(clean.latent(), ds.latent());
        let h = AmbientMetric::Identity;
        let (m, _) = evaluate(&out.model, &ds, None, Some(&clean), &h).unwrap();
        let z = out.model.encode(ds.points());
        let direct: f64 = (0..z.cols())
            .map(|j| {
                local_extrinsic_curvature(&out.model.decoder, &z.select_cols(&[j]), &h).unwrap()
            })
            .sum::<f64>()
            / z.cols() as f64;
        assert!((m.mean_curvature - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        let rd = relaxed_distortion_exact(&out.model.decoder, &z, &h).unwrap();
        assert!((m.relaxed_distortion - rd).abs() <= 1e-12 * rd.abs().max(1.0));
        let t = m.to_table();
        assert_eq!(
            t.column("manifold_fit").unwrap()[0],
            m.manifold_fit.unwrap()
        );
    }
}
