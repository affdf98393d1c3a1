//! Numerical laboratory for Poisson potentials with inverse-square poles:
//! point samples and clustering bounds, kernels and potentials, principal
//! Dirichlet eigenvalues, Feynman-Kac Monte Carlo and closed-form constants.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bounds_oracles;
pub mod cloud_geometry;
pub mod error;
pub mod experiments;
pub mod feynman_kac;
pub mod geom;
pub mod kernels;
pub mod num;
pub mod parallel;
pub mod point_process;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use point_process::{PointCloud, Region};
