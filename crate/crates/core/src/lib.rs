//! Density-matrix simulation of variational eigensolvers under Pauli gate
//! noise: parameter-shift gradients with shot noise, gate noise and
//! quasi-probabilistic error mitigation, SGD drivers, and calculators for the
//! associated bias, variance and convergence bounds.

pub mod ansatz;
pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gradient;
pub mod linalg;
pub mod noise;
pub mod observable;
pub mod optimizer;
mod par;
pub mod pauli;
pub mod qem;
pub mod rng;
pub mod state;

pub use error::{Error, Result};
