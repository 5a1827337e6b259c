//! Thresholded variational EM for topic models with long documents.

// Negated float comparisons are deliberate: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod inference;
pub mod init_seeded;
pub mod init_support;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
