//! Optimal sensor placement for Bayesian inverse problems governed by PDEs.
//!
//! Designs are chosen to maximize the expected information gain, evaluated
//! through low-rank factors of the data-space Gauss–Newton Hessian so that the
//! design search itself needs no PDE solves.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod counters;
pub mod criteria;
pub mod design;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod lowrank;
pub mod map;
pub mod mesh;
pub mod pipeline;
pub mod prior;
pub mod selection;

pub use design::Design;
pub use error::{Error, Result};

/// Independent seed for stream `index` derived from `base` (splitmix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
