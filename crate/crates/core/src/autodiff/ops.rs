//! Derivative operators on smooth maps: forward evaluation, JVP, VJP, full
//! Jacobian, second directional derivative, and reverse-mode gradients of
//! scalar losses over an encoder/decoder pair.

use crate::array::RealArray;
use crate::error::{Error, Result};

use super::dual::Dual;
use super::mlp::{Chart, MapDims, MlpParams, SmoothMap};
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Evaluates `map` at `x`, picking the implementation from the element type.
pub fn eval<T: Tensor, M: SmoothMap<T> + ?Sized>(map: &M, x: &T) -> T {
    map.apply(x)
}

fn check_input(map: &(impl MapDims + ?Sized), z: &RealArray, what: &'static str) -> Result<()> {
    if z.rows() != map.input_dim() || z.cols() == 0 {
        return Err(Error::dim(
            what,
            format!("{} x n", map.input_dim()),
            format!("{} x {}", z.rows(), z.cols()),
        ));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument(format!("{what}: non-finite input")));
    }
    Ok(())
}

fn check_point(map: &(impl MapDims + ?Sized), z: &RealArray, what: &'static str) -> Result<()> {
    check_input(map, z, what)?;
    if z.cols() != 1 {
        return Err(Error::dim(what, "a single column", z.cols()));
    }
    Ok(())
}

/// `f(z)`; `z` may hold several points as columns.
pub fn mlp_forward(params: &MlpParams, z: &RealArray) -> Result<RealArray> {
    check_input(params, z, "mlp_forward")?;
    Ok(eval(params, z))
}

/// `(f(z), J_f(z)·v)` in one forward-mode pass. Columns of `z` and `v` pair up.
pub fn jvp<M: SmoothMap<Dual<RealArray>> + ?Sized>(
    map: &M,
    z: &RealArray,
    v: &RealArray,
) -> Result<(RealArray, RealArray)> {
    check_input(map, z, "jvp point")?;
    if !v.same_shape(z) {
        return Err(Error::dim(
            "jvp tangent",
            format!("{:?}", z.shape()),
            format!("{:?}", v.shape()),
        ));
    }
    let out = eval(map, &Dual::new(z.clone(), v.clone())?);
    Ok(out.into_parts())
}

/// `(f(z), J_f(z)ᵀ·u)` via one reverse pass through the map.
pub fn vjp<M: SmoothMap<RealArray> + ?Sized>(
    map: &M,
    z: &RealArray,
    u: &RealArray,
) -> Result<(RealArray, RealArray)> {
    check_input(map, z, "vjp point")?;
    if u.rows() != map.output_dim() || u.cols() != z.cols() {
        return Err(Error::dim(
            "vjp cotangent",
            format!("{} x {}", map.output_dim(), z.cols()),
            format!("{} x {}", u.rows(), u.cols()),
        ));
    }
    Ok(map.apply_with_vjp(z, u))
}

/// `D x m` Jacobian at a single point. Column `i` is the JVP with `eᵢ`,
/// evaluated as one batched pass with bitwise-identical columns.
pub fn full_jacobian<M: SmoothMap<Dual<RealArray>> + ?Sized>(
    map: &M,
    z: &RealArray,
) -> Result<RealArray> {
    check_point(map, z, "full_jacobian")?;
    Ok(jacobian(map, z))
}

/// Second derivative of `ε ↦ f(z + ε·dz)` at zero.
pub fn second_directional<M: SmoothMap<Dual<Dual<RealArray>>> + ?Sized>(
    map: &M,
    z: &RealArray,
    dz: &RealArray,
) -> Result<RealArray> {
    check_input(map, z, "second_directional point")?;
    if !dz.same_shape(z) {
        return Err(Error::dim(
            "second_directional direction",
            format!("{:?}", z.shape()),
            format!("{:?}", dz.shape()),
        ));
    }
    let zero = RealArray::zeros(z.rows(), z.cols());
    let x = Dual::new(
        Dual::new(z.clone(), dz.clone())?,
        Dual::new(dz.clone(), zero)?,
    )?;
    let out = eval(map, &x);
    Ok(out.tan().tan().clone())
}

fn repeat_cols<T: Tensor>(z: &T, times: usize) -> T {
    z.select_cols(&vec![0; times])
}

/// Jacobian at the single point `z` (an `m x 1` column) for any element type.
pub fn jacobian<T: Tensor, M: SmoothMap<Dual<T>> + ?Sized>(map: &M, z: &T) -> T {
    let m = z.rows();
    let seeds = z.lift(&RealArray::identity(m));
    let x = Dual::new(repeat_cols(z, m), seeds).expect("depth within limit for jacobian");
    eval(map, &x).tan().clone()
}

/// Jacobian at `z` plus its directional derivatives `∂J/∂z · d` for each
/// direction in `dirs`, from a single nested forward pass.
pub fn jacobian_with_derivatives<T: Tensor, M: Chart<T> + ?Sized>(
    map: &M,
    z: &T,
    dirs: &[T],
) -> Result<(T, Vec<T>)> {
    let m = z.rows();
    let q = dirs.len().max(1);
    let n = m * q;
    let mut inner = RealArray::zeros(m, n);
    for block in 0..q {
        for i in 0..m {
            inner[(i, block * m + i)] = 1.0;
        }
    }
    let outer = if dirs.is_empty() {
        z.lift(&RealArray::zeros(m, n))
    } else {
        let reps: Vec<T> = dirs.iter().map(|d| repeat_cols(d, m)).collect();
        T::hcat(&reps)
    };
    let zr = repeat_cols(z, n);
    let zero = z.lift(&RealArray::zeros(m, n));
    let x = Dual::new(Dual::new(zr, z.lift(&inner))?, Dual::new(outer, zero)?)?;
    let y = eval(map, &x);
    let first: Vec<usize> = (0..m).collect();
    let jac = y.val().tan().select_cols(&first);
    let derivs = (0..dirs.len())
        .map(|b| {
            let idx: Vec<usize> = (b * m..(b + 1) * m).collect();
            y.tan().tan().select_cols(&idx)
        })
        .collect();
    Ok((jac, derivs))
}

/// Value and parameter gradients of a scalar built on the tape.
#[derive(Clone, Debug)]
pub struct ScalarGrad {
    pub value: f64,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
}

/// Reverse-mode gradient of `loss` with respect to every weight and bias of
/// both networks. `loss` may embed up to two forward-mode layers; deeper
/// nesting surfaces as [`Error::UnsupportedDepth`] from [`Dual::new`].
pub fn grad_of_scalar<F>(encoder: &MlpParams, decoder: &MlpParams, loss: F) -> Result<ScalarGrad>
where
    F: for<'t> FnOnce(&'t Tape, &super::Mlp<Var<'t>>, &super::Mlp<Var<'t>>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let enc = encoder.on_tape(&tape);
    let dec = decoder.on_tape(&tape);
    let out = loss(&tape, &enc, &dec)?;
    if out.rows() != 1 || out.cols() != 1 {
        return Err(Error::dim(
            "grad_of_scalar output",
            "1x1",
            format!("{}x{}", out.rows(), out.cols()),
        ));
    }
    let grads = tape.gradients(out);
    Ok(ScalarGrad {
        value: out.value().item(),
        encoder: enc.gradients(&grads),
        decoder: dec.gradients(&grads),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(a: RealArray) -> MlpParams {
        let d = a.rows();
        MlpParams::linear(a, RealArray::zeros(d, 1)).unwrap()
    }

    #[test]
    fn forward_trivial_cases() {
        let id = linear(RealArray::identity(2));
        let z = RealArray::column(&[1.0, 2.0]);
        assert_eq!(mlp_forward(&id, &z).unwrap().data(), &[1.0, 2.0]);
        let c = MlpParams::linear(RealArray::zeros(2, 2), RealArray::column(&[3.0, 4.0])).unwrap();
        assert_eq!(
            mlp_forward(&c, &RealArray::column(&[-7.0, 0.5]))
                .unwrap()
                .data(),
            &[3.0, 4.0]
        );
        assert!(matches!(
            mlp_forward(&id, &RealArray::column(&[1.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn linear_derivatives() {
        let a = RealArray::from_matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let net = linear(a.clone());
        let z = RealArray::column(&[0.3, -0.7]);
        let v = RealArray::column(&[1.5, 2.0]);
        let (fz, jv) = jvp(&net, &z, &v).unwrap();
        assert!(fz.max_abs_diff(&a.matmul(&z)) < 1e-15);
        assert!(jv.max_abs_diff(&a.matmul(&v)) < 1e-15);
        let u = RealArray::column(&[1.0, -1.0, 2.0]);
        let (_, jtu) = vjp(&net, &z, &u).unwrap();
        assert!(jtu.max_abs_diff(&a.t_matmul(&u)) < 1e-15);
        assert!(full_jacobian(&net, &z).unwrap().max_abs_diff(&a) < 1e-15);
        assert_eq!(second_directional(&net, &z, &v).unwrap().max_abs(), 0.0);
        let (_, zero) = jvp(&net, &z, &RealArray::zeros(2, 1)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn dimension_errors() {
        let net = linear(RealArray::identity(2));
        let z = RealArray::column(&[1.0, 2.0]);
        assert!(jvp(&net, &z, &RealArray::column(&[1.0])).is_err());
        assert!(vjp(&net, &z, &RealArray::column(&[1.0, 2.0, 3.0])).is_err());
        assert!(full_jacobian(&net, &RealArray::zeros(2, 2)).is_err());
        assert!(second_directional(&net, &z, &RealArray::zeros(3, 1)).is_err());
    }

    #[test]
    fn jacobian_columns_match_jvp_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpParams::init(&[3, 7, 7, 4], Activation::Tanh, &mut rng).unwrap();
        let z = RealArray::column(&[0.2, -0.4, 0.9]);
        let j = full_jacobian(&net, &z).unwrap();
        for i in 0..3 {
            let mut e = RealArray::zeros(3, 1);
            e[(i, 0)] = 1.0;
            let (_, col) = jvp(&net, &z, &e).unwrap();
            assert_eq!(col.col(0), j.col(i));
        }
    }

    #[test]
    fn gradient_of_quadratic_form() {
        // loss = ‖Wz‖²/2 → ∂/∂W = (Wz) zᵀ
        let w = RealArray::from_matrix(2, 3, vec![0.5, -1.0, 0.2, 0.3, 0.7, -0.4]);
        let dec = linear(w.clone());
        let enc = linear(RealArray::identity(3));
        let z = RealArray::column(&[1.0, 2.0, -0.5]);
        let g = grad_of_scalar(&enc, &dec, |tape, _enc, dec| {
            let zc = tape.constant(z.clone());
            Ok(eval(dec, &zc).square().sum().scale(0.5))
        })
        .unwrap();
        let expect = w.matmul(&z).matmul_t(&z);
        assert!(g.decoder.layers()[0].weight.max_abs_diff(&expect) < 1e-14);
        assert_eq!(g.encoder.layers()[0].weight.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let dec = linear(RealArray::identity(2));
        let g = grad_of_scalar(&dec, &dec, |tape, _, _| {
            Ok(tape.constant(RealArray::scalar(4.0)))
        })
        .unwrap();
        assert_eq!(g.value, 4.0);
        assert_eq!(g.decoder.layers()[0].weight.max_abs(), 0.0);
        assert_eq!(g.decoder.layers()[0].bias.max_abs(), 0.0);
    }

    #[test]
    fn depth_three_is_rejected() {
        let dec = linear(RealArray::identity(1));
        let r = grad_of_scalar(&dec, &dec, |tape, _, dec| {
            let z = tape.constant(RealArray::column(&[0.5]));
            let one = tape.constant(RealArray::column(&[1.0]));
            let d1 = Dual::new(z, one)?;
            let d2 = Dual::new(d1.clone(), d1)?;
            let d3 = Dual::new(d2.clone(), d2)?;
            Ok(eval(dec, &d3).value_var())
        });
        assert!(matches!(
            r,
            Err(Error::UnsupportedDepth { requested: 3, .. })
        ));

        trait ValueVar<'t> {
            fn value_var(&self) -> Var<'t>;
        }
        impl<'t> ValueVar<'t> for Dual<Dual<Dual<Var<'t>>>> {
            fn value_var(&self) -> Var<'t> {
                *self.val().val().val()
            }
        }
    }

    #[test]
    fn softplus_layers_differentiate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::init(&[1, 5, 2], Activation::Softplus, &mut rng).unwrap();
        let z = RealArray::column(&[0.3]);
        let h = 1e-5;
        let (_, jv) = jvp(&net, &z, &RealArray::column(&[1.0])).unwrap();
        let fp = mlp_forward(&net, &RealArray::column(&[0.3 + h])).unwrap();
        let fm = mlp_forward(&net, &RealArray::column(&[0.3 - h])).unwrap();
        let fd = fp.sub(&fm).scale(0.5 / h);
        assert!(jv.max_abs_diff(&fd) < 1e-8);
    }
}
