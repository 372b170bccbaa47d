//! Gradient-driven DropConnect with fixed-rate and adaptive baselines,
//! a from-scratch dense network trainer, and a reproducible experiment harness.
//!
//! Masks use the convention `1 = dropped` everywhere.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod error;
pub mod harness;
pub mod masking;
pub mod math;
pub mod network;
pub mod synthetic;

pub use error::{Error, ErrorCategory, Result};
