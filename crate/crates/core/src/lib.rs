//! Geometric autoencoder toolkit.
//!
//! Trains MLP encoder/decoder pairs with neighborhood-reconstruction,
//! extrinsic-curvature and isometric regularizers, and exposes the Riemannian
//! quantities behind them (pull-back metrics, geodesics, tangent projectors,
//! curvature forms, distortion measures) as exact numerical routines.

pub mod array;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod regularizers;
pub mod table;
pub mod trainer;

pub use array::RealArray;
pub use error::{Error, Result};
