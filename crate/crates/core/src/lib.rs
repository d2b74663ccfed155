//! Meta-learning workbench for regression algorithm selection.

// `!(x > 0.0)` is deliberate throughout: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod complexity;
pub mod data;
pub mod error;
pub mod experiment;
pub mod labels;
pub mod learners;
pub mod meta;
pub mod pipeline;
pub mod resampling;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
