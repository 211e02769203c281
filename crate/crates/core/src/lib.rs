//! Hard instances, Mercer spectra and information-gain tools for
//! squared-exponential Gaussian-process bandits on the hypersphere `S^d`.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod error;
pub mod gp;
pub mod hard;
pub mod mercer;
pub mod quadrature;
pub mod special;
pub mod sphere;

pub use error::{Error, Result};
pub use sphere::{geodesic, SpherePoint};
