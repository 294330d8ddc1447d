use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::array::RealArray;
use crate::autodiff::{eval, Chart, Dual, SmoothMap, Tensor};
use crate::data::NeighborhoodGraph;
use crate::error::{Error, Result};

/// Order of the local Taylor model used to decode neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approximation {
    Linear,
    Quadratic,
}

/// Gaussian kernel bandwidth: explicit, or the mean distance to the k-th
/// neighbor over the dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => write!(f, "auto"),
            Bandwidth::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bandwidth::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(Bandwidth::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "bandwidth must be a number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NraeConfig {
    pub order: Approximation,
    pub bandwidth: Bandwidth,
    /// Neighborhood size including the point itself.
    pub k: usize,
}

impl Default for NraeConfig {
    fn default() -> Self {
        NraeConfig {
            order: Approximation::Quadratic,
            bandwidth: Bandwidth::Auto,
            k: 10,
        }
    }
}

impl NraeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("nrae.k must be at least 1".into()));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "nrae.bandwidth must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// `f(z) + J·dz`, plus `½ ∂²f[dz, dz]` for the quadratic order. Columns of
/// `z` and `dz` pair up.
pub fn local_quadratic_approx<M: Chart<RealArray> + ?Sized>(
    decoder: &M,
    z: &RealArray,
    dz: &RealArray,
    order: Approximation,
) -> Result<RealArray> {
    if z.rows() != decoder.input_dim() || !z.same_shape(dz) || z.cols() == 0 {
        return Err(Error::dim(
            "local approximation",
            format!("{} x n point and matching offset", decoder.input_dim()),
            format!("{:?} and {:?}", z.shape(), dz.shape()),
        ));
    }
    Ok(taylor(decoder, z, dz, order))
}

fn taylor<T: Tensor, M: Chart<T> + ?Sized>(decoder: &M, z: &T, dz: &T, order: Approximation) -> T {
    match order {
        Approximation::Linear => {
            let y = eval(
                decoder,
                &Dual::new(z.clone(), dz.clone()).expect("nesting depth"),
            );
            y.val().add(y.tan())
        }
        Approximation::Quadratic => {
            let zero = dz.lift(&RealArray::zeros(dz.rows(), dz.cols()));
            let x = Dual::new(
                Dual::new(z.clone(), dz.clone()).expect("nesting depth"),
                Dual::new(dz.clone(), zero).expect("nesting depth"),
            )
            .expect("nesting depth");
            let y = eval(decoder, &x);
            y.val()
                .val()
                .add(y.val().tan())
                .add(&y.tan().tan().scale(0.5))
        }
    }
}

/// [`taylor`] for many offsets sharing few expansion points: `owner[p]` is
/// the column of `zb` that offset column `p` of `dz` expands around. The
/// decoder is differentiated once per center along the coordinate axes and
/// the model assembled per offset.
fn taylor_at_centers<T: Tensor, M: Chart<T> + ?Sized>(
    decoder: &M,
    zb: &T,
    owner: &[usize],
    dz: &T,
    order: Approximation,
) -> T {
    let (m, nb) = (zb.rows(), zb.cols());
    let d = decoder.output_dim();
    // row i of dz broadcast to all d output rows
    let spread: Vec<T> = (0..m)
        .map(|i| {
            let mut e = RealArray::zeros(d, m);
            for r in 0..d {
                e[(r, i)] = 1.0;
            }
            dz.lift(&e).matmul(dz)
        })
        .collect();
    match order {
        Approximation::Linear => {
            let idx: Vec<usize> = (0..nb).flat_map(|b| std::iter::repeat_n(b, m)).collect();
            let mut seeds = RealArray::zeros(m, nb * m);
            for b in 0..nb {
                for i in 0..m {
                    seeds[(i, b * m + i)] = 1.0;
                }
            }
            let y = eval(
                decoder,
                &Dual::new(zb.select_cols(&idx), zb.lift(&seeds)).expect("nesting depth"),
            );
            let mut out = y
                .val()
                .select_cols(&owner.iter().map(|&b| b * m).collect::<Vec<_>>());
            for (i, s) in spread.iter().enumerate() {
                let ji = y
                    .tan()
                    .select_cols(&owner.iter().map(|&b| b * m + i).collect::<Vec<_>>());
                out = out.add(&ji.mul(s));
            }
            out
        }
        Approximation::Quadratic => {
            let sq = m * m;
            let idx: Vec<usize> = (0..nb).flat_map(|b| std::iter::repeat_n(b, sq)).collect();
            let mut inner = RealArray::zeros(m, nb * sq);
            let mut outer = RealArray::zeros(m, nb * sq);
            for b in 0..nb {
                for j in 0..m {
                    for i in 0..m {
                        inner[(i, b * sq + j * m + i)] = 1.0;
                        outer[(j, b * sq + j * m + i)] = 1.0;
                    }
                }
            }
            let zero = zb.lift(&RealArray::zeros(m, nb * sq));
            let x = Dual::new(
                Dual::new(zb.select_cols(&idx), zb.lift(&inner)).expect("nesting depth"),
                Dual::new(zb.lift(&outer), zero).expect("nesting depth"),
            )
            .expect("nesting depth");
            let y = eval(decoder, &x);
            let cols = |slot: usize| owner.iter().map(|&b| b * sq + slot).collect::<Vec<_>>();
            let mut out = y.val().val().select_cols(&cols(0));
            for (i, si) in spread.iter().enumerate() {
                out = out.add(&y.val().tan().select_cols(&cols(i)).mul(si));
            }
            for (j, sj) in spread.iter().enumerate() {
                for (i, si) in spread.iter().enumerate() {
                    let hij = y.tan().tan().select_cols(&cols(j * m + i));
                    out = out.add(&hij.mul(&si.mul(sj)).scale(0.5));
                }
            }
            out
        }
    }
}

/// Neighborhood reconstruction loss over the batch `batch` (column indices of
/// `data`):
/// `(1/B) Σ_x (1/|N(x)|) Σ_{x′∈N(x)} K(x′, x) ‖x′ − f̃(g(x′); g(x))‖²`.
/// Only the columns touched by the batch and its neighborhoods are encoded.
pub fn nrae_loss<T, E, D>(
    encoder: &E,
    decoder: &D,
    data: &T,
    batch: &[usize],
    graph: &NeighborhoodGraph,
    order: Approximation,
) -> Result<T>
where
    T: Tensor,
    E: SmoothMap<T> + ?Sized,
    D: Chart<T> + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::InvalidArgument(
            "nrae_loss needs a nonempty batch".into(),
        ));
    }
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut centers = Vec::new();
    let mut others = Vec::new();
    let mut weights = Vec::new();
    for &c in batch {
        let (nbrs, ws) = graph
            .get(c)
            .ok_or_else(|| Error::Config(format!("point {c} has no neighborhood in the graph")))?;
        if nbrs.is_empty() {
            return Err(Error::Config(format!(
                "point {c} has an empty neighborhood"
            )));
        }
        let norm = 1.0 / (nbrs.len() * batch.len()) as f64;
        for (&j, &w) in nbrs.iter().zip(ws) {
            centers.push(c);
            others.push(j);
            weights.push(w * norm);
        }
    }
    for &i in centers.iter().chain(&others) {
        if i >= data.cols() {
            return Err(Error::dim(
                "neighborhood index",
                format!("< {}", data.cols()),
                i,
            ));
        }
        let next = slot.len();
        slot.entry(i).or_insert(next);
    }
    let mut touched: Vec<(usize, usize)> = slot.iter().map(|(&i, &s)| (s, i)).collect();
    touched.sort_unstable();
    let cols: Vec<usize> = touched.iter().map(|&(_, i)| i).collect();
    let z = encoder.apply(&data.select_cols(&cols));
    let pos = |i: &usize| slot[i];
    let zc = z.select_cols(&centers.iter().map(pos).collect::<Vec<_>>());
    let zo = z.select_cols(&others.iter().map(pos).collect::<Vec<_>>());
    let dz = zo.sub(&zc);
    let m = z.rows();
    let per_center = match order {
        Approximation::Linear => m,
        Approximation::Quadratic => m * m,
    };
    // expanding around each center once is cheaper than one expansion per pair
    // when neighborhoods are large relative to the latent dimension
    let approx = if batch.len() * per_center < centers.len() {
        let zb = z.select_cols(&batch.iter().map(pos).collect::<Vec<_>>());
        let owner: Vec<usize> = batch
            .iter()
            .enumerate()
            .flat_map(|(b, &c)| std::iter::repeat_n(b, graph.neighbors(c).len()))
            .collect();
        taylor_at_centers(decoder, &zb, &owner, &dz, order)
    } else {
        taylor(decoder, &zc, &dz, order)
    };
    let target = data.select_cols(&others);
    let res = target.sub(&approx).square();
    let mut w = RealArray::zeros(res.rows(), res.cols());
    for (p, wp) in weights.iter().enumerate() {
        for r in 0..res.rows() {
            w[(r, p)] = *wp;
        }
    }
    Ok(res.mul(&res.lift(&w)).sum())
}
