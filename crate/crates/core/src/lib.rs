//! Detection and permutation inference for differentially expressed
//! subnetworks in two-group connectome studies.
//!
//! The pipeline runs a two-sample test on every edge, turns p-values into
//! `-log p` weights, extracts dense high-weight subnetworks by RatioCut
//! spectral partitioning under a size-penalized objective, and assigns each
//! extracted subnetwork a family-wise p-value from group-label or graph-edge
//! permutation nulls of the maximum subnetwork statistic.

pub mod baselines;
pub mod cli;
pub mod detect;
pub mod edgestats;
pub mod error;
pub mod graphcore;
pub mod infer;
pub mod io;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
