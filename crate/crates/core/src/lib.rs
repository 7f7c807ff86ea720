//! Quadrotor simulation with collision-cone control barrier function safety
//! filters and a higher-order CBF baseline.

// Validation uses `!(x > bound)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod c3bf;
pub mod compare;
pub mod dynamics;
pub mod error;
pub mod hocbf;
pub mod qp;
pub mod sim;
pub mod trace_io;
pub mod tracking;

pub use error::{Error, Result};
