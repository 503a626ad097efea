//! Simulation of a Jaynes-Cummings model in which the atom exchanges squeezed
//! coherent photons instead of single photons.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod specfun;
pub mod propagate;
pub mod states;
pub mod validate;

pub use error::{Error, Result};
