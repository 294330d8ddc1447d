use std::io::Write;

use crate::array::RealArray;
use crate::autodiff::Chart;
use crate::error::{Error, Result};
use crate::linalg;
use crate::table::Table;

use super::metric::AmbientMetric;
use super::{curvature_form, frame, local};

#[derive(Clone, Debug, PartialEq)]
pub struct PointGeometry {
    pub z: Vec<f64>,
    /// Ascending eigenvalues of the pull-back metric.
    pub eigenvalues: Vec<f64>,
    pub curvature: f64,
    pub distortion: f64,
    pub condition: f64,
}

/// Per-point geometry over a set of latent points plus aggregates.
/// Rank-deficient points are listed in `skipped` and left out of every
/// aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryReport {
    pub points: Vec<PointGeometry>,
    /// `(column index, smallest singular value)` of excluded points.
    pub skipped: Vec<(usize, f64)>,
    pub mean_curvature: f64,
    pub max_curvature: f64,
    pub relaxed_distortion: f64,
    pub mean_condition: f64,
    pub max_condition: f64,
    /// Mean eigenvalue over all points.
    pub scale: f64,
}

impl GeometryReport {
    pub fn compute<M: Chart<RealArray> + ?Sized>(
        dec: &M,
        latent: &RealArray,
        h: &AmbientMetric,
    ) -> Result<Self> {
        let mut points = Vec::with_capacity(latent.cols());
        let mut skipped = Vec::new();
        for i in 0..latent.cols() {
            let z = latent.select_cols(&[i]);
            let (_, _, g) = match frame(dec, &z, h) {
                Ok(f) => f,
                Err(Error::DegenerateMetric { singular_value }) => {
                    skipped.push((i, singular_value));
                    continue;
                }
                Err(e) => return Err(e.context(format!("latent point {i}"))),
            };
            let c = curvature_form(dec, &z)?;
            let g = local::symmetrize(&g);
            let eigenvalues = linalg::symmetric_eigenvalues(&g);
            points.push(PointGeometry {
                z: z.col(0),
                curvature: local::trace_solve(&g, &c).item().max(0.0),
                distortion: eigenvalues.iter().map(|l| (1.0 - l).powi(2)).sum(),
                condition: eigenvalues[eigenvalues.len() - 1] / eigenvalues[0],
                eigenvalues,
            });
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no full-rank latent points among {} evaluated",
                latent.cols()
            )));
        }
        let n = points.len() as f64;
        let eigs: Vec<Vec<f64>> = points.iter().map(|p| p.eigenvalues.clone()).collect();
        let m = eigs[0].len() as f64;
        Ok(GeometryReport {
            mean_curvature: points.iter().map(|p| p.curvature).sum::<f64>() / n,
            max_curvature: points.iter().map(|p| p.curvature).fold(0.0, f64::max),
            relaxed_distortion: local::relaxed_from_eigenvalues(&eigs),
            mean_condition: points.iter().map(|p| p.condition).sum::<f64>() / n,
            max_condition: points.iter().map(|p| p.condition).fold(0.0, f64::max),
            scale: eigs.iter().map(|e| e.iter().sum::<f64>()).sum::<f64>() / (n * m),
            points,
            skipped,
        })
    }

    pub fn to_table(&self) -> Table {
        let m = self.points[0].z.len();
        let mut header: Vec<String> = (1..=m).map(|i| format!("z{i}")).collect();
        header.extend((1..=m).map(|i| format!("lambda{i}")));
        header.push("curvature".into());
        header.push("distortion".into());
        let mut t = Table::new(header);
        for p in &self.points {
            let mut row = p.z.clone();
            row.extend(&p.eigenvalues);
            row.push(p.curvature);
            row.push(p.distortion);
            t.push_row(row);
        }
        t.footer("points", self.points.len())
            .footer("skipped_rank_deficient", self.skipped.len())
            .footer("mean_curvature", self.mean_curvature)
            .footer("max_curvature", self.max_curvature)
            .footer("relaxed_distortion", self.relaxed_distortion)
            .footer("mean_condition", self.mean_condition)
            .footer("max_condition", self.max_condition)
            .footer("scale", self.scale)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.to_table().write(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{local_extrinsic_curvature, relaxed_distortion_exact, CircleMap};

    #[test]
    fn report_matches_direct_calls() {
        let f = CircleMap::new(2.0);
        let zs = RealArray::from_matrix(1, 3, vec![0.0, 0.5, 1.0]);
        let r = GeometryReport::compute(&f, &zs, &AmbientMetric::Identity).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!((r.mean_curvature - 0.5).abs() < 1e-10);
        assert!((r.scale - 4.0).abs() < 1e-12);
        assert!(r.relaxed_distortion < 1e-20);
        let k =
            local_extrinsic_curvature(&f, &zs.select_cols(&[1]), &AmbientMetric::Identity).unwrap();
        assert_eq!(r.points[1].curvature, k);
        let rd = relaxed_distortion_exact(&f, &zs, &AmbientMetric::Identity).unwrap();
        assert_eq!(r.relaxed_distortion, rd);

        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let t = Table::read(buf.as_slice()).unwrap();
        assert_eq!(t.header, vec!["z1", "lambda1", "curvature", "distortion"]);
        assert_eq!(t.meta("points"), Some("3"));
    }

    /// `z ↦ (z³, 0)`, singular only at the origin.
    struct Cusp;

    impl crate::autodiff::MapDims for Cusp {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            2
        }
    }

    impl<T: crate::autodiff::Tensor> crate::autodiff::SmoothMap<T> for Cusp {
        fn apply(&self, x: &T) -> T {
            T::vcat(&[x.mul(x).mul(x), x.scale(0.0)])
        }
        fn apply_with_vjp(&self, x: &T, u: &T) -> (T, T) {
            let u0 = u.transpose().select_cols(&[0]).transpose();
            (self.apply(x), u0.mul(&x.mul(x).scale(3.0)))
        }
    }

    #[test]
    fn degenerate_points_are_skipped() {
        let zs = RealArray::from_matrix(1, 3, vec![1.0, 0.0, -0.5]);
        let r = GeometryReport::compute(&Cusp, &zs, &AmbientMetric::Identity).unwrap();
        assert_eq!(r.points.len(), 2);
        assert_eq!(r.skipped, vec![(1, 0.0)]);
        let only_bad = RealArray::from_matrix(1, 1, vec![0.0]);
        assert!(GeometryReport::compute(&Cusp, &only_bad, &AmbientMetric::Identity).is_err());
    }
}
