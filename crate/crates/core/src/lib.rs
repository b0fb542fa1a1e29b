//! Node embeddings estimated from sample graphs.
//!
//! Two embeddings are provided, each with a full-graph fit and a sample-graph
//! estimator built from design-weighted estimating equations:
//!
//! - [`enf`]: the eigen-neighbour-function embedding x = ξ M y with a
//!   logistic or tanh classifier on top.
//! - [`snle`]: the supervised normalized-Laplacian embedding minimizing
//!   x'P_λ'P_λx + γ‖y − x‖².
//!
//! Samples come from [`sampling`] (targeted random walks and snowball
//! sampling); [`see`] turns them into weighted node sets, combines replicate
//! estimates and computes linearised variances.

pub mod enf;
pub mod error;
pub mod graph;
pub mod sampling;
pub mod see;
pub mod snle;
pub mod spectral;
pub mod zkc;

pub use error::{Error, Result};
pub use graph::{Graph, NodeValues};
