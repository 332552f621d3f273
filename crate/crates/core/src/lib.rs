//! Open-system GRAPE for a qubit coupled to a dissipative two-level
//! fluctuator.

pub mod error;
pub mod experiments;
pub mod grape;
pub mod hilbert;
pub mod propagation;
pub mod redfield;

pub use error::{Error, Result};
