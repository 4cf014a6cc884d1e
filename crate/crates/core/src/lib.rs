//! Coupled optomechanical limit-cycle oscillators: Langevin and quantum-jump
//! engines, relative-phase analysis, reduced phase models, noise budgets and
//! reproducible parameter sweeps.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effective;
pub mod error;
pub mod mcwf;
pub mod noise_budget;
pub mod orchestrate;
pub mod params;
pub mod phase;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use params::{
    crossover_point, make_identical_dimer, CrossoverPoint, DimerParams, OmParams, QuantumScale,
};
