//! Concentration and PAC-Bayes bounds over finite hypothesis classes.
//!
//! Losses are given directly as discrete laws, so every target quantity
//! (`R(h)`, `M_eta(h)`, excess risk) is computed exactly and the bounds can
//! be checked by simulation.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod posterior;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
