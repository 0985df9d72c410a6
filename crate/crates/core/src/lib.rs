//! Hierarchical Bayesian mixed models for individual differences in
//! response-time effects.
//!
//! The crate fits the trial-level model `y = mu + alpha_i + x * delta_i + e`
//! by Gibbs sampling, compares four structures for the individual effects
//! `delta_i` (unconstrained, all-positive, common, null) with Bayes factors,
//! and runs the same pipeline on shift-log transformed response times.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evidence;
pub mod kv;
pub mod model;
pub mod gibbs;
pub mod normal_eq;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod summary;

pub use error::{Error, Result};
