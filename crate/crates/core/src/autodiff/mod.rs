//! Nested automatic differentiation for small dense networks.
//!
//! Three element types implement [`Tensor`]: plain [`RealArray`](crate::RealArray)
//! values, forward-mode [`Dual`] numbers (nestable twice), and reverse-mode
//! tape variables [`Var`]. Reverse mode wraps the forward layers, so a loss
//! containing JVPs or second directional derivatives still has exact
//! parameter gradients.

mod dual;
mod mlp;
mod ops;
mod tape;
mod tensor;
mod weights;

pub use dual::{Dual, DualDepth, MAX_FORWARD_DEPTH};
pub use mlp::{Activation, Chart, Layer, MapDims, Mlp, MlpParams, SmoothMap};
pub use ops::{
    eval, full_jacobian, grad_of_scalar, jacobian, jacobian_with_derivatives, jvp, mlp_forward,
    second_directional, vjp, ScalarGrad,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use weights::{load_weights, read_weights, save_weights, write_weights, MAGIC};
