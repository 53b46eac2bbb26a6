//! Two-stage job recommendation.
//!
//! Each target user gets a pool of candidate items from nine cheap
//! generators; a gradient boosted tree ensemble then estimates, for every
//! (user, candidate) pair, the probability of a positive interaction in the
//! next week, and the 30 most probable non-deleted candidates are submitted.

pub mod candidates;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod gbdt;
pub mod hashing;
pub mod matrix;
pub mod pipeline;
pub mod provenance;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
