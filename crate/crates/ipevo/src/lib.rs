//! Interval-partition evolutions built from spindle-marked stable scaffolding.
//!
//! The crate is organised bottom-up:
//!
//! * [`ip`]: interval partitions, diversity, the `d_α` / `d_H'` metrics;
//! * [`spindle`]: block diffusions, excursion (spindle) samplers and transforms;
//! * [`scaffold`]: point processes of spindles and their exact scaffolding paths;
//! * [`skewer`]: the skewer map and interval-partition evolutions;
//! * [`clade`]: excursion intervals, bi-clades, cutoffs;
//! * [`sweep`]: streaming level-crossing samplers used by the statistical checks;
//! * [`verify`]: the Monte Carlo test harness.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clade;
pub mod error;
pub mod ip;
pub mod par;
pub mod rng;
pub mod scaffold;
pub mod skewer;
pub mod spindle;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
