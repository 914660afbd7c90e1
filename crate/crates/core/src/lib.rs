//! Spherical convolution on equirectangular images: row-untied CNNs that
//! reproduce, on every tangent plane of the sphere, the outputs of a network
//! trained on perspective images.

pub mod baselines;
pub mod distill;
pub mod engine;
mod error;
pub mod geometry;
pub mod netspec;
pub mod planner;

pub use error::{Error, Result};
