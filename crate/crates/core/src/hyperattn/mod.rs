//! Hyperedge embeddings and type-specific multi-head attention from each
//! node over the hyperedges it masters.
//!
//! For node `v` and hyperedge `e` of type `ψ`, head `h` scores
//! `Q^h(v)ᵀ·Θ_ψ·K^h(e)·μ_ψ/√d`, the scores are normalized per node and head,
//! the head outputs `z^h(v) = Σ_e w^h(v,e)·K^h(e)` are concatenated and an
//! MLP (one hidden relu layer) gives the node representation.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{xavier_with, Matrix, ParamId, ParamStore, Real, Tape, Var};

pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_ROUNDS: usize = 1;

/// `E = X·H / δ`: column `e` is the incidence-weighted mean of its members.
pub fn hyperedge_embed<T: Real>(x: &Matrix<T>, h: &Matrix<T>, edge_degree: &[T]) -> Result<Matrix<T>> {
    let mut e = x.matmul(h)?;
    if edge_degree.len() != e.cols() {
        return Err(Error::Dimension {
            op: "hyperedge_embed",
            lhs: h.shape(),
            rhs: (1, edge_degree.len()),
        });
    }
    for r in 0..e.rows() {
        for (v, &d) in e.row_mut(r).iter_mut().zip(edge_degree) {
            *v /= d;
        }
    }
    Ok(e)
}

/// Which node attends to which hyperedge, grouped by node and by type.
#[derive(Clone, Debug)]
pub struct HyperStructure {
    num_nodes: usize,
    nodes_by_type: Vec<Arc<Vec<usize>>>,
    edges_by_type: Vec<Arc<Vec<usize>>>,
    /// `(node, hyperedge)` in hyperedge order; the node is the edge's master.
    pairs: Arc<Vec<(usize, usize)>>,
    /// Pair indices of every node.
    groups: Arc<Vec<Vec<usize>>>,
}

impl HyperStructure {
    pub fn new(
        node_types: &[usize],
        num_node_types: usize,
        edge_masters: &[usize],
        edge_types: &[usize],
        num_edge_types: usize,
    ) -> Result<Self> {
        assert_eq!(edge_masters.len(), edge_types.len());
        let n = node_types.len();
        let mut nodes_by_type = vec![Vec::new(); num_node_types];
        for (v, &t) in node_types.iter().enumerate() {
            nodes_by_type[t].push(v);
        }
        let mut edges_by_type = vec![Vec::new(); num_edge_types];
        for (e, &t) in edge_types.iter().enumerate() {
            edges_by_type[t].push(e);
        }
        let pairs: Vec<(usize, usize)> = edge_masters.iter().copied().zip(0..).collect();
        let mut groups = vec![Vec::new(); n];
        for (p, &(v, _)) in pairs.iter().enumerate() {
            groups[v].push(p);
        }
        if let Some(v) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("node {v} masters no hyperedge")));
        }
        Ok(Self {
            num_nodes: n,
            nodes_by_type: nodes_by_type.into_iter().map(Arc::new).collect(),
            edges_by_type: edges_by_type.into_iter().map(Arc::new).collect(),
            pairs: Arc::new(pairs),
            groups: Arc::new(groups),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Pair indices (columns of the weight matrix) belonging to each node.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Parameters of one attention round.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub heads: usize,
    pub dim: usize,
    /// `d×d` per node type: the `K` head projections stacked by rows.
    pub q_proj: Vec<ParamId>,
    /// `d×d` per hyperedge type, stacked likewise.
    pub k_proj: Vec<ParamId>,
    /// `d/K × d/K` per hyperedge type, shared by all heads.
    pub theta: Vec<ParamId>,
    /// `1×1` scaling per hyperedge type.
    pub mu: Vec<ParamId>,
    pub w_hidden: ParamId,
    pub b_hidden: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    /// `d×N` node representations.
    pub z: Var,
    /// `d×M` hyperedge embeddings.
    pub e: Var,
    /// `K×M` raw scores, one column per (master, hyperedge) pair.
    pub scores: Var,
    /// `K×M` normalized weights.
    pub weights: Var,
    /// `d×N` concatenated head outputs before the MLP.
    pub heads: Var,
}

impl AttentionLayer {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        dim: usize,
        heads: usize,
        num_node_types: usize,
        num_edge_types: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "embedding dim {dim} is not divisible by head count {heads}"
            )));
        }
        let dk = dim / heads;
        let q_proj = (0..num_node_types)
            .map(|t| store.add(format!("{prefix}.q.{t}"), xavier_with(dim, dim, rng)))
            .collect();
        let k_proj = (0..num_edge_types)
            .map(|t| store.add(format!("{prefix}.k.{t}"), xavier_with(dim, dim, rng)))
            .collect();
        let theta = (0..num_edge_types)
            .map(|t| store.add(format!("{prefix}.theta.{t}"), xavier_with(dk, dk, rng)))
            .collect();
        let mu = (0..num_edge_types)
            .map(|t| store.add(format!("{prefix}.mu.{t}"), Matrix::scalar(T::one())))
            .collect();
        Ok(Self {
            heads,
            dim,
            q_proj,
            k_proj,
            theta,
            mu,
            w_hidden: store.add(format!("{prefix}.mlp.w0"), xavier_with(dim, dim, rng)),
            b_hidden: store.add(format!("{prefix}.mlp.b0"), Matrix::zeros(dim, 1)),
            w_out: store.add(format!("{prefix}.mlp.w1"), xavier_with(dim, dim, rng)),
            b_out: store.add(format!("{prefix}.mlp.b1"), Matrix::zeros(dim, 1)),
        })
    }

    /// One attention round. `x` is `d×N`, `h` is `N×M`, `edge_degree` is `1×M`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        h: Var,
        edge_degree: Var,
        structure: &HyperStructure,
    ) -> Result<AttentionOutput> {
        if tape.shape(x).0 != self.dim {
            return Err(Error::Dimension {
                op: "attention input",
                lhs: tape.shape(x),
                rhs: (self.dim, structure.num_nodes),
            });
        }
        let xh = tape.matmul(x, h)?;
        let e = tape.div_columns(xh, edge_degree)?;
        self.attend(tape, store, x, e, structure)
    }

    /// Attention given precomputed hyperedge embeddings `e` (`d×M`).
    pub fn attend<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        e: Var,
        structure: &HyperStructure,
    ) -> Result<AttentionOutput> {
        let (q, _) = self.project(tape, store, x, &self.q_proj, &structure.nodes_by_type, false)?;
        let (k, b) = self.project(tape, store, e, &self.k_proj, &structure.edges_by_type, true)?;
        let b = b.expect("key projection yields bilinear operand");

        let scores = tape.pair_bilinear(q, b, structure.pairs.clone(), self.heads)?;
        let weights = tape.softmax_per_group(scores, structure.groups.clone());
        let heads = tape.pair_aggregate(weights, k, structure.pairs.clone(), structure.num_nodes)?;

        let w0 = store.bind(tape, self.w_hidden);
        let b0 = store.bind(tape, self.b_hidden);
        let w1 = store.bind(tape, self.w_out);
        let b1 = store.bind(tape, self.b_out);
        let hid = tape.matmul(w0, heads)?;
        let hid = tape.add_column(hid, b0)?;
        let hid = tape.relu(hid);
        let z = tape.matmul(w1, hid)?;
        let z = tape.add_column(z, b1)?;
        Ok(AttentionOutput {
            z,
            e,
            scores,
            weights,
            heads,
        })
    }

    /// Type-wise projection of the columns of `src`. With `keys` set also
    /// returns `μ_ψ/√d · Θ_ψ·K^h` per head, the right operand of the score.
    #[allow(clippy::too_many_arguments)]
    fn project<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        src: Var,
        proj: &[ParamId],
        groups: &[Arc<Vec<usize>>],
        keys: bool,
    ) -> Result<(Var, Option<Var>)> {
        let dk = self.dim / self.heads;
        let inv_sqrt_d = T::of(1.0 / (self.dim as f64).sqrt());
        let mut parts = Vec::new();
        let mut bparts = Vec::new();
        let mut positions = Vec::new();
        for (t, cols) in groups.iter().enumerate() {
            if cols.is_empty() {
                continue;
            }
            let w = store.bind(tape, proj[t]);
            let g = tape.gather_columns(src, cols.clone());
            let p = tape.matmul(w, g)?;
            if keys {
                let theta = store.bind(tape, self.theta[t]);
                let mut blocks = Vec::with_capacity(self.heads);
                for hd in 0..self.heads {
                    let s = tape.slice_rows(p, hd * dk, (hd + 1) * dk);
                    blocks.push(tape.matmul(theta, s)?);
                }
                let bt = tape.concat_rows(&blocks)?;
                let mu = store.bind(tape, self.mu[t]);
                let bt = tape.mul_scalar(bt, mu);
                bparts.push(tape.scale(bt, inv_sqrt_d));
            }
            parts.push(p);
            positions.push((**cols).clone());
        }
        let positions = Arc::new(positions);
        let out = tape.interleave_columns(&parts, positions.clone());
        let b = keys.then(|| tape.interleave_columns(&bparts, positions));
        Ok((out, b))
    }
}

/// A stack of attention rounds sharing one hypergraph; round `r + 1` reads
/// the output of round `r` as its node embeddings.
#[derive(Clone, Debug)]
pub struct HyperAttention {
    pub layers: Vec<AttentionLayer>,
}

impl HyperAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        dim: usize,
        heads: usize,
        rounds: usize,
        num_node_types: usize,
        num_edge_types: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::Config("hyperattn.rounds must be at least 1".into()));
        }
        let layers = (0..rounds)
            .map(|r| {
                AttentionLayer::init(store, &format!("hyperattn.{r}"), dim, heads, num_node_types, num_edge_types, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Runs every round; returns the output of the last one.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        h: Var,
        edge_degree: Var,
        structure: &HyperStructure,
    ) -> Result<Vec<AttentionOutput>> {
        let mut outs: Vec<AttentionOutput> = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let out = layer.forward(tape, store, cur, h, edge_degree, structure)?;
            cur = out.z;
            outs.push(out);
        }
        Ok(outs)
    }
}
