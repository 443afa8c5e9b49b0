//! Certified lower bounds on reach-avoid probabilities for control loops whose
//! dynamics are modelled by Bayesian neural networks, and synthesis of
//! policies that maximise those bounds.
//!
//! The pipeline is: learn a BNN dynamics model ([`posterior`]) from data
//! collected on the ground-truth system ([`env`]), discretise the state space
//! ([`grid`]), then run the backward recursion in [`certify`] which bounds the
//! one-step transition probabilities with interval bound propagation
//! ([`interval`]). [`synthesize`] runs the same recursion while choosing the
//! action per cell.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod container;
pub mod env;
mod error;
pub mod grid;
pub mod interval;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod policy;
pub mod posterior;
pub mod report;
pub mod rng;
pub mod synthesize;

pub use error::{Error, Result};
