//! Numerical laboratory for energy-limited programmable quantum processors on
//! truncated Fock spaces.

pub mod error;
pub mod experiments;
pub mod bounds;
pub mod channels;
pub mod fock;
pub mod metrics;
pub mod nets;
pub mod processor;
pub mod random;

pub use error::{Error, Result};
