//! Simulation and verification toolkit for Volterra-driven processes.
//!
//! The numerical core is generic over the scalar type (see [`Real`]); the
//! aliases below fix it to `f64` or `f32`.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod processes;
pub mod quadrature;
pub mod regularity;
pub mod rng;
pub mod scalar;
pub mod spde;
pub mod stats;
pub mod wiener_integral;

pub use error::{Error, Result};
pub use kernels::{make_fbm_kernel, CustomKernel, FbmKernel, KernelFamily, VolterraKernel};
pub use scalar::Real;

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type FbmKernel64 = FbmKernel<f64>;
pub type FbmKernel32 = FbmKernel<f32>;
