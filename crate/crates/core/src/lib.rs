//! Convex and concave relaxations of expected-value objectives for
//! parametric ODEs with bounded random inputs.

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod expectation;
pub mod expr;
pub mod interval;
pub mod mccormick;
pub mod odeint;
pub mod staterelax;
pub mod stochastics;

pub use error::{Error, Result};
pub use interval::{Interval, IntervalBox};
pub use mccormick::McCormick;
