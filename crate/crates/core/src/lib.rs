//! Heterogeneous hypergraph representation learning.
//!
//! The pipeline fuses pairwise structure into initial node embeddings
//! ([`fusion`]), grows one hyperedge per (master node, node type) by sparse
//! reconstruction of the master from candidates of that type ([`hypergen`]),
//! and updates node representations with type-specific multi-head attention
//! over each node's hyperedges ([`hyperattn`]). [`trainer`] optimizes all of
//! it end to end under a convex combination of the task loss and the
//! reconstruction loss.

pub mod config;
pub mod error;
pub mod fusion;
pub mod hetgraph;
pub mod hyperattn;
pub mod hypergen;
pub mod numcore;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
