//! Wrapped Gaussian process latent variable models.
//!
//! Probabilistic dimensionality reduction for data living on a Riemannian
//! manifold. Data are mapped to the tangent space at their Fréchet mean, a
//! GPLVM is fitted to the tangent coordinates, and predictions are pushed back
//! onto the manifold through the exponential map, so every mean prediction and
//! every predictive sample is a valid point of the data manifold.
//!
//! The crate is organised as
//!
//! - [`manifolds`]: exponential/logarithmic maps, distances, frames, Fréchet
//!   means and projections for spheres, Kendall shape space, SPD matrices under
//!   the Log-Euclidean metric, Euclidean space and products of these;
//! - [`wgd`]: wrapped Gaussian distributions and their conditioning;
//! - [`kernels`]: covariance functions and their derivatives;
//! - [`model`]: the latent variable model, its training and prediction, and
//!   the Euclidean baselines;
//! - [`data`]: dataset loaders and preprocessing.

pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod manifolds;
pub mod model;
pub mod wgd;

pub use error::{Error, ErrorCategory, Result};
pub use manifolds::{Frame, Manifold, Point, Tangent};
