//! Simulation, steady-state cartography and quenching analysis for coupled
//! nonlocal diffusion systems with singular absorption.

// Validation deliberately uses `!(x > 0.0)` style comparisons so NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod stationary;
pub mod sweep;

pub use error::{Error, Result};
