//! Pathwise Itô calculus on sampled trajectories, with closed-form and
//! discretely rebalanced CPPI/DPPI portfolio insurance built on top.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bond;
pub mod convergence;
pub mod discrete;
pub mod error;
pub mod expr;
pub mod fbm;
pub mod generate;
pub mod grid;
pub mod ito;
pub mod par;
pub mod path;
pub mod quadvar;
pub mod report;
pub mod rng;
pub mod series;
pub mod strategy;
pub mod sum;

pub use error::{Error, Result};
