//! Multilayer perceptrons and the smooth-map abstraction charts are built on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::error::{Error, Result};

use super::dual::Dual;
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

/// Layer nonlinearity. All choices are twice continuously differentiable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Softplus => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Softplus),
            _ => None,
        }
    }

    fn apply<T: Tensor>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<P> {
    /// `out x in`.
    pub weight: P,
    /// `out x 1`.
    pub bias: P,
    pub activation: Activation,
}

/// A chain of affine layers, generic over how weights are held (plain
/// arrays, or tape variables while training).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<P> {
    layers: Vec<Layer<P>>,
    in_dim: usize,
    out_dim: usize,
}

pub type MlpParams = Mlp<RealArray>;

impl<P> Mlp<P> {
    pub fn layers(&self) -> &[Layer<P>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn map_params<Q>(&self, mut f: impl FnMut(&P) -> Q) -> Mlp<Q> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: f(&l.weight),
                    bias: f(&l.bias),
                    activation: l.activation,
                })
                .collect(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }
}

impl MlpParams {
    /// Validates dimension chaining and the identity output layer.
    pub fn new(layers: Vec<Layer<RealArray>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("an MLP needs at least one layer".into()))?;
        let in_dim = first.weight.cols();
        let mut prev = in_dim;
        for (k, l) in layers.iter().enumerate() {
            if l.weight.cols() != prev {
                return Err(
                    Error::dim("layer input", prev, l.weight.cols()).context(format!("layer {k}"))
                );
            }
            if l.bias.rows() != l.weight.rows() || l.bias.cols() != 1 {
                return Err(Error::dim(
                    "layer bias",
                    format!("{}x1", l.weight.rows()),
                    format!("{}x{}", l.bias.rows(), l.bias.cols()),
                )
                .context(format!("layer {k}")));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "layer {k} has non-finite weights"
                )));
            }
            prev = l.weight.rows();
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidArgument(
                "the final layer must use the identity activation".into(),
            ));
        }
        Ok(Mlp {
            layers,
            in_dim,
            out_dim: prev,
        })
    }

    /// A single identity-activation layer `x ↦ Wx + b`.
    pub fn linear(weight: RealArray, bias: RealArray) -> Result<Self> {
        Self::new(vec![Layer {
            weight,
            bias,
            activation: Activation::Identity,
        }])
    }

    /// Glorot-uniform weights and zero biases. `widths` lists every layer
    /// width including input and output; hidden layers use `hidden`.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths {widths:?} must list at least two positive sizes"
            )));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (widths[k], widths[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weight: RealArray::from_matrix(fan_out, fan_in, data),
                    bias: RealArray::zeros(fan_out, 1),
                    activation: if k + 1 == n {
                        Activation::Identity
                    } else {
                        hidden
                    },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All weights and biases, layer by layer (weights before biases).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Inverse of [`MlpParams::flat`] keeping this network's layout.
    pub fn with_flat(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.param_count() {
            return Err(Error::dim(
                "flat parameters",
                self.param_count(),
                values.len(),
            ));
        }
        let mut offset = 0;
        let mut take = |like: &RealArray| {
            let n = like.len();
            let chunk = values[offset..offset + n].to_vec();
            offset += n;
            RealArray::from_matrix(like.rows(), like.cols(), chunk)
        };
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: take(&l.weight),
                bias: take(&l.bias),
                activation: l.activation,
            })
            .collect();
        Ok(Mlp {
            layers,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        })
    }

    /// Registers every weight and bias as a tape variable.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> Mlp<Var<'t>> {
        self.map_params(|p| tape.variable(p.clone()))
    }

    /// Prepends the linear map `z ↦ A z`, giving `f ∘ A`.
    pub fn precompose_linear(&self, a: &RealArray) -> Result<Self> {
        if a.rows() != self.in_dim {
            return Err(Error::dim("precompose", self.in_dim, a.rows()));
        }
        let first = &self.layers[0];
        let mut layers = self.layers.clone();
        layers[0] = Layer {
            weight: first.weight.matmul(a),
            bias: first.bias.clone(),
            activation: first.activation,
        };
        Self::new(layers)
    }

    /// Scales the network output by `s`.
    pub fn scale_output(&self, s: f64) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("non-empty");
        last.weight = last.weight.scale(s);
        last.bias = last.bias.scale(s);
        out
    }
}

impl<'t> Mlp<Var<'t>> {
    /// Collects the gradient of every weight and bias into a network-shaped value.
    pub fn gradients(&self, grads: &Gradients) -> MlpParams {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: grads.wrt(l.weight),
                bias: grads.wrt(l.bias),
                activation: l.activation,
            })
            .collect();
        Mlp {
            layers,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }
}

/// Input and output dimensions of a map `Rⁿ → Rᵏ`.
pub trait MapDims {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
}

/// A smooth map evaluated column-wise on batches of points (one point per column).
pub trait SmoothMap<T: Tensor>: MapDims {
    fn apply(&self, x: &T) -> T;

    /// Returns `(f(x), J_f(x)ᵀ u)` column-wise. The transpose product is
    /// itself built from `T` operations, so it remains differentiable.
    fn apply_with_vjp(&self, x: &T, u: &T) -> (T, T);
}

/// A map that can be evaluated on plain values and on one or two nested
/// forward-mode layers over `T`.
pub trait Chart<T: Tensor>: SmoothMap<T> + SmoothMap<Dual<T>> + SmoothMap<Dual<Dual<T>>> {}

impl<T: Tensor, M> Chart<T> for M where
    M: SmoothMap<T> + SmoothMap<Dual<T>> + SmoothMap<Dual<Dual<T>>>
{
}

impl<P> MapDims for Mlp<P> {
    fn input_dim(&self) -> usize {
        self.in_dim
    }
    fn output_dim(&self) -> usize {
        self.out_dim
    }
}

impl<T: Tensor> SmoothMap<T> for Mlp<T::Param> {
    fn apply(&self, x: &T) -> T {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.activation.apply(h.affine(&l.weight, &l.bias));
        }
        h
    }

    fn apply_with_vjp(&self, x: &T, u: &T) -> (T, T) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let a = h.affine(&l.weight, &l.bias);
            h = l.activation.apply(a.clone());
            pre.push(a);
            post.push(h.clone());
        }
        let mut delta = u.clone();
        for (k, l) in self.layers.iter().enumerate().rev() {
            delta = match l.activation {
                Activation::Identity => delta,
                Activation::Tanh => delta.mul(&post[k].square().scale(-1.0).offset(1.0)),
                Activation::Softplus => delta.mul(&pre[k].sigmoid()),
            };
            delta = delta.linear_t(&l.weight);
        }
        (h, delta)
    }
}
