use crate::autodiff::{MapDims, SmoothMap, Tensor};

/// The circle chart `z ↦ (r cos z, r sin z)`, a decoder with known geometry:
/// `G = r²`, `C = 2`, curvature `2/r²`, geodesics of constant latent speed.
#[derive(Clone, Copy, Debug)]
pub struct CircleMap {
    pub radius: f64,
}

impl CircleMap {
    pub fn new(radius: f64) -> Self {
        CircleMap { radius }
    }
}

fn row<T: Tensor>(u: &T, i: usize) -> T {
    u.transpose().select_cols(&[i]).transpose()
}

impl MapDims for CircleMap {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
}

impl<T: Tensor> SmoothMap<T> for CircleMap {
    fn apply(&self, x: &T) -> T {
        T::vcat(&[x.cos().scale(self.radius), x.sin().scale(self.radius)])
    }

    fn apply_with_vjp(&self, x: &T, u: &T) -> (T, T) {
        let back = row(u, 1)
            .mul(&x.cos())
            .sub(&row(u, 0).mul(&x.sin()))
            .scale(self.radius);
        (self.apply(x), back)
    }
}
