//! Hierarchical and joint (shared random effect) models for clustered
//! vessel data where the cluster size is itself a random outcome.
//!
//! The crate is organized around a family registry: each model family
//! (field-level %LA, shifted-Poisson / negative-binomial cluster size,
//! three-level vessel area and circularity models, the conditional
//! reciprocal-size variant, and the joint shared-effect model) implements
//! one strategy trait covering its likelihood kernel, marginal likelihood,
//! simulator, and MCMC kernel, and is selected at runtime by name.

pub mod cli;
pub mod domain;
pub mod error;
pub mod mcmc;
pub mod ml;
pub mod model;
pub mod power;
pub mod quad;
pub mod recover;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
