//! Branching Brownian particles and discrete Brownian snakes in a random
//! environment, with exact oracles and Monte Carlo verification tooling.

pub mod branching;
pub mod brox;
pub mod environment;
pub mod error;
pub mod functional;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod snake;
pub mod testfn;

pub use error::{Result, SimError};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
