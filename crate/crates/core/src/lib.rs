//! Poisson multinomial distributions: exact oracles, Fourier learning over
//! integer lattices, DFT-based sampling, moment-matching covers, anonymous
//! game equilibria and discrete Gaussian approximations.

pub mod cli;
pub mod clt;
pub mod cover;
pub mod error;
pub mod fourier;
pub mod games;
pub mod linalg;
pub mod learner;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
