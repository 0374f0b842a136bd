//! Zero-inflated Bayesian nonparametric differential abundance analysis.
//!
//! This crate fits a hierarchical count model to an n-samples by p-taxa
//! abundance table with K >= 2 sample groups and sample-level covariates,
//! and reports the taxa whose covariate-adjusted abundance patterns differ
//! across groups. Taxa are clustered into shared relative-abundance motifs
//! under a Chinese restaurant process prior; zeros are split into technical
//! (censored) and sampling zeros, with censored counts stochastically
//! imputed; group/cluster regression vectors carry a finite-mixture prior
//! whose ties define the non-differential clusters.
//!
//! The main entry points are:
//! - [`data`]: loading, validation, screening, and reference-taxon handling,
//! - [`engine`]: MCMC configuration and chain execution,
//! - [`inference`]: posterior differential-abundance calls at a target FDR,
//! - [`simulate`]: the synthetic-data generator used for benchmarking,
//! - [`evaluate`]: ROC/AUC and call-set comparison utilities.

pub mod ars;
pub mod clusters;
pub mod composition;
pub mod data;
pub mod engine;
pub mod error;
pub mod evaluate;
pub mod gir;
pub mod inference;
pub mod math;
pub mod regression;
pub mod simulate;
pub mod state;
pub mod trace;
pub mod zeros;

pub use error::{Error, Result};
