//! Sequential k-space column sampling for accelerated MRI.
//!
//! The crate models acquisition as a dense- or sparse-reward POMDP over
//! column masks, trains actor-critic samplers and residual reconstructors
//! with hand-written gradients, and checks the formulation's claims with
//! exhaustive oracles on tiny instances.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
mod error;

pub mod envs;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};
