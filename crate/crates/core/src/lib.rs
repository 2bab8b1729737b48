//! Design-space exploration for dense DNN accelerators.
//!
//! Layers are bounds of the seven-loop convolution nest ([`workload`]).
//! A mapping ([`schedule`]) blocks and reorders the loops per memory level
//! and unrolls some of them across the PE array. [`costmodel`] predicts
//! access counts, energy, utilization and runtime in closed form for an
//! architecture ([`archmodel`]); [`simoracle`] executes the same mapping
//! loop by loop to check those predictions; [`optimizer`] searches the joint
//! space of blockings, dataflows and memory sizes.

pub mod archmodel;
pub mod bundled;
pub mod costmodel;
pub mod error;
pub mod optimizer;
pub mod schedule;
pub mod simoracle;
pub mod validation;
mod text;
pub mod workload;

pub use error::{Error, Result};
