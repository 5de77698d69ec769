//! Initial node embeddings from the pairwise graph.
//!
//! Relational mode runs one round of relation-aware mean aggregation:
//! `x_i = relu(W_self·ẋ_i + Σ_r mean_{j∈N_r(i)} W_r·ẋ_j)` where `N_r(i)` are
//! the sources of type-`r` edges pointing at `i`. Linear mode drops the
//! neighbour term.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hetgraph::HetPairGraph;
use crate::numcore::{xavier_with, Matrix, ParamId, ParamStore, Real, SegmentLayout, Tape, Var};

pub const DEFAULT_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    Relational,
    Linear,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relational" => Ok(Self::Relational),
            "linear" => Ok(Self::Linear),
            other => Err(Error::Config(format!(
                "fusion.mode must be relational or linear, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Relational => "relational",
            Self::Linear => "linear",
        })
    }
}

/// Per edge type, the mean-aggregation pattern over incoming neighbours.
#[derive(Clone, Debug)]
pub struct RelationIndex {
    layouts: Vec<Arc<SegmentLayout>>,
    weights: Vec<Vec<f64>>,
}

impl RelationIndex {
    pub fn new(graph: &HetPairGraph) -> Self {
        let n = graph.num_nodes();
        let mut incoming: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; graph.num_edge_types()];
        for e in graph.edges() {
            incoming[e.etype][e.dst].push(e.src);
        }
        let mut layouts = Vec::new();
        let mut weights = Vec::new();
        for per_node in incoming {
            let mut members = Vec::new();
            let mut offsets = vec![0];
            let mut w = Vec::new();
            for mut srcs in per_node {
                srcs.sort_unstable();
                srcs.dedup();
                let k = srcs.len();
                w.extend(std::iter::repeat_n(1.0 / k as f64, k));
                members.extend(srcs);
                offsets.push(members.len());
            }
            layouts.push(Arc::new(SegmentLayout::new(members, offsets)));
            weights.push(w);
        }
        Self { layouts, weights }
    }

    pub fn num_relations(&self) -> usize {
        self.layouts.len()
    }

    /// Deduplicated in-neighbours of `node` under relation `r`.
    pub fn neighbors(&self, r: usize, node: usize) -> &[usize] {
        let l = &self.layouts[r];
        &l.members[l.range(node)]
    }
}

#[derive(Clone, Debug)]
pub struct FusionParams {
    pub mode: FusionMode,
    pub dim: usize,
    pub w_self: ParamId,
    /// One `d×D` message matrix per edge type; empty in linear mode.
    pub w_rel: Vec<ParamId>,
}

impl FusionParams {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        mode: FusionMode,
        dim: usize,
        in_dim: usize,
        num_edge_types: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w_self = store.add("fusion.w_self", xavier_with(dim, in_dim, rng));
        let w_rel = match mode {
            FusionMode::Linear => Vec::new(),
            FusionMode::Relational => (0..num_edge_types)
                .map(|r| store.add(format!("fusion.w_rel.{r}"), xavier_with(dim, in_dim, rng)))
                .collect(),
        };
        Self {
            mode,
            dim,
            w_self,
            w_rel,
        }
    }

    /// Records the fusion layer on `tape`; `raw` is the `D×N` feature node.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        raw: Var,
        index: &RelationIndex,
    ) -> Result<Var> {
        let w_self = store.bind(tape, self.w_self);
        let mut pre = tape.matmul(w_self, raw)?;
        if self.mode == FusionMode::Relational {
            if index.num_relations() != self.w_rel.len() {
                return Err(Error::Config(format!(
                    "graph has {} edge types but fusion was built for {}",
                    index.num_relations(),
                    self.w_rel.len()
                )));
            }
            for (r, &w) in self.w_rel.iter().enumerate() {
                if index.layouts[r].is_empty() {
                    continue;
                }
                let coeff = tape.constant(Matrix::row_vector(
                    &index.weights[r].iter().map(|&x| T::of(x)).collect::<Vec<_>>(),
                ));
                let mean = tape.segment_combine(raw, coeff, index.layouts[r].clone());
                let w = store.bind(tape, w);
                let msg = tape.matmul(w, mean)?;
                pre = tape.add(pre, msg)?;
            }
        }
        Ok(tape.relu(pre))
    }
}

/// Evaluates the fusion layer outside of training.
pub fn pairwise_fuse<T: Real>(
    graph: &HetPairGraph,
    raw: &Matrix<T>,
    store: &ParamStore<T>,
    params: &FusionParams,
) -> Result<Matrix<T>> {
    let index = RelationIndex::new(graph);
    let mut tape = Tape::new();
    let x = tape.constant(raw.clone());
    let out = params.forward(&mut tape, store, x, &index)?;
    Ok(tape.value(out).clone())
}
