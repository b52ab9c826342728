//! Taylor-Hood finite element solver for EMAC-regularized incompressible flow
//! in two dimensions, with the EMAC, skew-symmetric and NS-alpha formulations
//! for comparison.

pub mod bc;
pub mod benchmarks;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod mesh;
pub mod quadrature;
pub mod schemes;
pub mod space;
pub mod operators;
pub mod sparse;

pub use error::{Error, Result};
