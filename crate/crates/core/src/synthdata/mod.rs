//! Seeded planted-class heterogeneous graphs and brute-force oracles.

mod generate;
pub mod oracle;

pub use generate::{expected_undirected_edges, generate, SynthConfig};
pub use oracle::{four_node_fixture, oracle_forward, oracle_nnls, OracleInstance, NnlsSolution};
