//! Dynamic sparse training of extreme multi-label classifiers whose output
//! layer has a fixed number of inputs per label.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clustering;
pub mod data;
pub mod dst;
pub mod error;
pub mod metrics;
pub mod model;
pub mod real;
pub mod sparse;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
