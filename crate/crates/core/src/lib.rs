//! Simulation kernel for compliant robotic excavation of granular regolith.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod control;
pub mod granular;
pub mod manipulator;
pub mod procgen;
pub mod env;

pub use error::{Error, Result};
