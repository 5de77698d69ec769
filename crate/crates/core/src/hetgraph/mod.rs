//! Heterogeneous pairwise graph: typed nodes, typed directed edges, raw
//! features and optional class labels.

mod io;
mod link;
mod split;

pub use io::{load_graph, load_graph_dir, save_graph, save_graph_dir, EDGES_FILE, LABELS_FILE, NODES_FILE};
pub use link::{hide_edges, LinkSplit};
pub use split::{split_nodes, NodeSplit};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub etype: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HetPairGraph {
    node_type: Vec<usize>,
    node_type_names: Vec<String>,
    edges: Vec<Edge>,
    edge_type_names: Vec<String>,
    /// `D×N`, one column per node.
    features: Matrix<f64>,
    labels: Option<Vec<Option<usize>>>,
    num_classes: usize,
}

impl HetPairGraph {
    /// Builds and validates a graph. `labels[i] = None` marks an unlabeled node.
    pub fn new(
        node_type: Vec<usize>,
        node_type_names: Vec<String>,
        edges: Vec<Edge>,
        edge_type_names: Vec<String>,
        features: Matrix<f64>,
        labels: Option<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let num_classes = labels
            .as_ref()
            .map(|l| l.iter().flatten().map(|&c| c + 1).max().unwrap_or(0))
            .unwrap_or(0);
        let g = Self {
            node_type,
            node_type_names,
            edges,
            edge_type_names,
            features,
            labels,
            num_classes,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_type.len();
        let bad = |msg: String| Err(Error::Config(msg));
        if self.features.cols() != n {
            return bad(format!(
                "feature matrix has {} columns for {n} nodes",
                self.features.cols()
            ));
        }
        if let Some(t) = self.node_type.iter().find(|&&t| t >= self.node_type_names.len()) {
            return bad(format!("node type id {t} outside vocabulary"));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return bad(format!("edge {i} ({} -> {}) references a missing node", e.src, e.dst));
            }
            if e.src == e.dst {
                return bad(format!("edge {i} is a self-loop on node {}", e.src));
            }
            if e.etype >= self.edge_type_names.len() {
                return bad(format!("edge {i} has edge type id {} outside vocabulary", e.etype));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return bad(format!("{} labels for {n} nodes", labels.len()));
            }
        }
        if !self.features.is_finite() {
            return bad("non-finite raw feature".into());
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.node_type.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    pub fn num_node_types(&self) -> usize {
        self.node_type_names.len()
    }

    pub fn num_edge_types(&self) -> usize {
        self.edge_type_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.node_type[v]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[v])
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.as_ref().is_some_and(|l| l.iter().any(Option::is_some))
    }

    /// Nodes of type `t`, ascending.
    pub fn nodes_of_type(&self, t: usize) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.node_type[v] == t).collect()
    }

    /// Undirected neighbour lists (duplicates and both directions collapsed).
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Edge endpoints at each node, counting both directions.
    pub fn incident_counts(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for e in &self.edges {
            deg[e.src] += 1;
            deg[e.dst] += 1;
        }
        deg
    }

    /// Same nodes, types and features with a different edge list.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        let mut g = self.clone();
        g.edges = edges;
        g.validate()?;
        Ok(g)
    }

    /// Applies a node relabeling: new id of old node `v` is `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let mut inv = vec![usize::MAX; n];
        for (old, &new) in perm.iter().enumerate() {
            inv[new] = old;
        }
        let node_type = inv.iter().map(|&o| self.node_type[o]).collect();
        let features = self.features.select_columns(&inv);
        let labels = self
            .labels
            .as_ref()
            .map(|l| inv.iter().map(|&o| l[o]).collect());
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                etype: e.etype,
            })
            .collect();
        Self::new(
            node_type,
            self.node_type_names.clone(),
            edges,
            self.edge_type_names.clone(),
            features,
            labels,
        )
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// `n`-node path 0-1-2-..., one node type, one edge type, both directions.
    pub fn path(n: usize) -> HetPairGraph {
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push(Edge { src: i, dst: i + 1, etype: 0 });
            edges.push(Edge { src: i + 1, dst: i, etype: 0 });
        }
        let feats = Matrix::from_vec(2, n, (0..2 * n).map(|x| x as f64 * 0.1).collect()).unwrap();
        HetPairGraph::new(
            vec![0; n],
            vec!["a".into()],
            edges,
            vec!["a-a".into()],
            feats,
            Some((0..n).map(|i| Some(i % 2)).collect()),
        )
        .unwrap()
    }
}
