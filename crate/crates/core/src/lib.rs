//! Numerical laboratory for Lifschitz tails of fractional alloy-type operators
//! (−Δ)^{α/2} + V on R^d.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod stats;

pub use error::{LabError, Result};
pub use kernel::{levy_constant, DiagBound, StableKernel, TorusKernel};
pub use model::{
    sample_disorder, truncate_kappa, AlloyPotential, CouplingDistribution, DisorderField, LatticeBox, PotentialMode,
    SingleSiteProfile,
};
