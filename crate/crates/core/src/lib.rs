//! Sparse, cross-model AND-OR interaction primitives extracted from the outputs
//! of black-box functions on every masked variant of an input sample.

pub mod cli;
pub mod decomposition;
pub mod error;
pub mod extraction;
pub mod interactions;
pub mod io;
pub mod lattice;
pub mod objective;
pub mod optimizer;
mod primal_dual;
pub mod synth;

pub use error::{Error, Result};
