pub mod brw;
pub mod cli;
pub mod error;
pub mod fixed_point;
pub mod initial;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
