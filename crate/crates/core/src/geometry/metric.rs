use std::fmt;
use std::sync::Arc;

use crate::array::RealArray;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::linalg;

type MetricField = Arc<dyn Fn(&[f64]) -> RealArray + Send + Sync>;

/// Riemannian metric `H(x)` of the ambient data space.
#[derive(Clone)]
pub enum AmbientMetric {
    Identity,
    /// Constant diagonal metric with positive entries.
    Diagonal(Vec<f64>),
    /// Point-dependent symmetric positive-definite metric.
    Field(MetricField),
}

impl fmt::Debug for AmbientMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmbientMetric::Identity => write!(f, "Identity"),
            AmbientMetric::Diagonal(d) => write!(f, "Diagonal({d:?})"),
            AmbientMetric::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl AmbientMetric {
    pub fn diagonal(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() || entries.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "diagonal metric entries must be positive and finite, got {entries:?}"
            )));
        }
        Ok(AmbientMetric::Diagonal(entries))
    }

    pub fn field(f: impl Fn(&[f64]) -> RealArray + Send + Sync + 'static) -> Self {
        AmbientMetric::Field(Arc::new(f))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, AmbientMetric::Identity)
    }

    /// `H(x)` as a `D x D` matrix, validated for symmetry and positivity.
    pub fn at(&self, x: &[f64]) -> Result<RealArray> {
        let d = x.len();
        match self {
            AmbientMetric::Identity => Ok(RealArray::identity(d)),
            AmbientMetric::Diagonal(diag) => {
                if diag.len() != d {
                    return Err(Error::dim("diagonal metric", d, diag.len()));
                }
                let mut h = RealArray::zeros(d, d);
                for (i, v) in diag.iter().enumerate() {
                    h[(i, i)] = *v;
                }
                Ok(h)
            }
            AmbientMetric::Field(f) => {
                let h = f(x);
                if h.rows() != d || h.cols() != d {
                    return Err(Error::dim(
                        "metric field",
                        format!("{d}x{d}"),
                        format!("{}x{}", h.rows(), h.cols()),
                    ));
                }
                if h.max_abs_diff(&h.transpose()) > 1e-12 {
                    return Err(Error::InvalidArgument(
                        "metric field is not symmetric".into(),
                    ));
                }
                let lo = linalg::symmetric_eigenvalues(&h)[0];
                if !(lo > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "metric field is not positive definite (smallest eigenvalue {lo:e})"
                    )));
                }
                Ok(h)
            }
        }
    }

    /// Applies `H(xⱼ)` to column `j` of `v`. The metric is evaluated at the
    /// primal points `x` and treated as constant with respect to `v`'s
    /// dependencies.
    pub fn apply<T: Tensor>(&self, x: &RealArray, v: &T) -> Result<T> {
        match self {
            AmbientMetric::Identity => Ok(v.clone()),
            AmbientMetric::Diagonal(diag) => {
                if diag.len() != v.rows() {
                    return Err(Error::dim("diagonal metric", v.rows(), diag.len()));
                }
                let mut scale = RealArray::zeros(v.rows(), v.cols());
                for i in 0..v.rows() {
                    for j in 0..v.cols() {
                        scale[(i, j)] = diag[i];
                    }
                }
                Ok(v.mul(&v.lift(&scale)))
            }
            AmbientMetric::Field(_) => {
                let cols = (0..v.cols())
                    .map(|j| {
                        let h = self.at(&x.col(j))?;
                        Ok(v.lift(&h).matmul(&v.select_cols(&[j])))
                    })
                    .collect::<Result<Vec<T>>>()?;
                Ok(T::hcat(&cols))
            }
        }
    }

    /// `vᵀ H(x) v` per column, as a `1 x n` row.
    pub(crate) fn quad_forms(&self, x: &RealArray, v: &RealArray) -> Result<Vec<f64>> {
        let hv: RealArray = self.apply(x, v)?;
        Ok((0..v.cols())
            .map(|j| (0..v.rows()).map(|i| v[(i, j)] * hv[(i, j)]).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_validation() {
        assert!(AmbientMetric::diagonal(vec![1.0, 0.0]).is_err());
        assert!(AmbientMetric::diagonal(vec![1.0, -2.0]).is_err());
        let h = AmbientMetric::diagonal(vec![1.0, 2.0]).unwrap();
        assert_eq!(h.at(&[0.0, 0.0]).unwrap().data(), &[1.0, 0.0, 0.0, 2.0]);
        assert!(h.at(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn field_validation() {
        let asym = AmbientMetric::field(|_| RealArray::from_matrix(2, 2, vec![1.0, 0.5, 0.0, 1.0]));
        assert!(asym.at(&[0.0, 0.0]).is_err());
        let indefinite =
            AmbientMetric::field(|_| RealArray::from_matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]));
        assert!(indefinite.at(&[0.0, 0.0]).is_err());
        let ok = AmbientMetric::field(|x| {
            RealArray::from_matrix(2, 2, vec![1.0 + x[0] * x[0], 0.1, 0.1, 1.0])
        });
        let v = RealArray::from_matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = RealArray::from_matrix(2, 2, vec![2.0, 0.0, 0.0, 0.0]);
        let hv: RealArray = ok.apply(&x, &v).unwrap();
        assert_eq!(hv.col(0), vec![5.0, 0.1]);
        assert_eq!(hv.col(1), vec![0.1, 1.0]);
    }
}
