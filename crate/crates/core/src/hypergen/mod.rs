//! Learned hyperedges: every master node reconstructs itself from the other
//! nodes of each node type, and the surviving coefficients become the
//! incidence entries of that hyperedge.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hetgraph::HetPairGraph;
use crate::numcore::{
    stream_rng, xavier_with, IncidenceLayout, Matrix, ParamId, ParamStore, Real, SegmentLayout, Tape, Var,
};

pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct HypergenConfig {
    /// Weight of the reconstruction error.
    pub lambda: f64,
    /// Weight of the per-set l2 penalty on the coefficients.
    pub gamma: f64,
    /// Weight of the l1 penalty. Always 1 in the model; tests switch it off.
    pub l1: f64,
    pub threshold: f64,
    /// Keep at most this many members per candidate set (seeded subsample).
    pub candidate_cap: Option<usize>,
}

impl Default for HypergenConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            l1: 1.0,
            threshold: DEFAULT_THRESHOLD,
            candidate_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub master: usize,
    pub set_type: usize,
    /// All nodes of `set_type` except the master, ascending.
    pub members: Vec<usize>,
}

/// One set per (master, node type) with at least one eligible member,
/// ordered by master then type.
pub fn enumerate_candidate_sets(graph: &HetPairGraph) -> Vec<CandidateSet> {
    let by_type: Vec<Vec<usize>> = (0..graph.num_node_types()).map(|t| graph.nodes_of_type(t)).collect();
    let mut sets = Vec::new();
    for master in 0..graph.num_nodes() {
        for (t, nodes) in by_type.iter().enumerate() {
            let members: Vec<usize> = nodes.iter().copied().filter(|&v| v != master).collect();
            if !members.is_empty() {
                sets.push(CandidateSet {
                    master,
                    set_type: t,
                    members,
                });
            }
        }
    }
    sets
}

/// Uniformly subsamples every set larger than `cap`, keeping ascending order.
pub fn cap_candidate_sets(sets: &mut [CandidateSet], cap: usize, seed: u64) {
    let mut rng = stream_rng(seed, "candidate_cap");
    for s in sets.iter_mut().filter(|s| s.members.len() > cap) {
        let mut keep: Vec<usize> = sample(&mut rng, s.members.len(), cap.max(1)).into_vec();
        keep.sort_unstable();
        s.members = keep.into_iter().map(|i| s.members[i]).collect();
    }
}

/// `x̂ = X(members)·relu(p)`.
pub fn reconstruct_master<T: Real>(x: &Matrix<T>, set: &CandidateSet, p: &[T]) -> Result<Vec<T>> {
    if p.len() != set.members.len() {
        return Err(Error::Dimension {
            op: "reconstruct_master",
            lhs: (1, p.len()),
            rhs: (1, set.members.len()),
        });
    }
    let mut out = vec![T::zero(); x.rows()];
    for (&m, &c) in set.members.iter().zip(p) {
        let c = c.max(T::zero());
        for (r, o) in out.iter_mut().enumerate() {
            *o += c * x.get(r, m);
        }
    }
    Ok(out)
}

/// `‖x̂ − θ·x_master‖₂`.
pub fn reconstruction_error<T: Real>(x_hat: &[T], x_master: &[T], theta: &Matrix<T>) -> T {
    assert_eq!(theta.shape(), (x_hat.len(), x_master.len()));
    (0..x_hat.len())
        .map(|r| {
            let proj: T = theta.row(r).iter().zip(x_master).map(|(&a, &b)| a * b).sum();
            let d = x_hat[r] - proj;
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// `Σ_sets λ·c + ‖relu p‖₁ + γ·‖relu p‖₂` for given errors and raw coefficients.
pub fn reconstruction_loss<T: Real>(errors: &[T], raw: &[Vec<T>], lambda: f64, gamma: f64) -> T {
    assert_eq!(errors.len(), raw.len());
    errors
        .iter()
        .zip(raw)
        .map(|(&c, p)| {
            let eff: Vec<T> = p.iter().map(|&x| x.max(T::zero())).collect();
            let l1: T = eff.iter().copied().sum();
            let l2 = eff.iter().map(|&x| x * x).sum::<T>().sqrt();
            T::of(lambda) * c + l1 + T::of(gamma) * l2
        })
        .sum()
}

/// Dense incidence matrix with column metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Incidence<T> {
    /// `N×M`.
    pub h: Matrix<T>,
    pub masters: Vec<usize>,
    pub edge_types: Vec<usize>,
}

/// Master entry 1, member entry `min(relu p, 1)` above `threshold`, else 0.
pub fn build_incidence<T: Real>(
    num_nodes: usize,
    sets: &[CandidateSet],
    raw: &[Vec<T>],
    threshold: f64,
) -> Incidence<T> {
    assert_eq!(sets.len(), raw.len());
    let thr = T::of(threshold);
    let mut h = Matrix::zeros(num_nodes, sets.len());
    for (e, (s, p)) in sets.iter().zip(raw).enumerate() {
        assert_eq!(s.members.len(), p.len());
        h.set(s.master, e, T::one());
        for (&m, &c) in s.members.iter().zip(p) {
            let c = c.max(T::zero());
            if c > thr {
                h.set(m, e, c.min(T::one()));
            }
        }
    }
    Incidence {
        h,
        masters: sets.iter().map(|s| s.master).collect(),
        edge_types: sets.iter().map(|s| s.set_type).collect(),
    }
}

/// `d(v) = Σ_e w(e)·H(v, e)`.
pub fn node_degree<T: Real>(h: &Matrix<T>, w: &[T]) -> Vec<T> {
    assert_eq!(w.len(), h.cols());
    (0..h.rows())
        .map(|v| h.row(v).iter().zip(w).map(|(&x, &we)| x * we).sum())
        .collect()
}

/// `δ(e) = Σ_v H(v, e)`.
pub fn edge_degree<T: Real>(h: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); h.cols()];
    for v in 0..h.rows() {
        for (o, &x) in out.iter_mut().zip(h.row(v)) {
            *o += x;
        }
    }
    out
}

/// Trainable state of hyperedge generation: coefficients of every candidate
/// set (one flat row) and one projection per set type.
#[derive(Clone, Debug)]
pub struct HyperedgeBank {
    sets: Vec<CandidateSet>,
    segments: Arc<SegmentLayout>,
    incidence: Arc<IncidenceLayout>,
    /// Set indices of each type, and the masters of those sets.
    positions_by_type: Arc<Vec<Vec<usize>>>,
    masters_by_type: Vec<Arc<Vec<usize>>>,
    /// Flat `1×L` raw coefficients.
    pub p: ParamId,
    /// `d×d` projection per node type that has at least one set.
    pub theta: Vec<Option<ParamId>>,
}

#[derive(Clone, Copy, Debug)]
pub struct HypergenOutput {
    /// `N×M` incidence matrix.
    pub h: Var,
    /// `1×M` edge degrees.
    pub edge_degree: Var,
    /// Scalar reconstruction loss.
    pub recon_loss: Var,
    /// `1×S` reconstruction errors.
    pub errors: Var,
}

impl HyperedgeBank {
    /// Registers coefficients (uniform in `(0, 2/n)` for a set of size `n`,
    /// so every candidate starts as a member) and Xavier projections.
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        graph: &HetPairGraph,
        sets: Vec<CandidateSet>,
        dim: usize,
        threshold: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Config("graph yields no candidate sets".into()));
        }
        let mut members = Vec::new();
        let mut offsets = vec![0];
        let mut raw = Vec::new();
        for s in &sets {
            let hi = 2.0 / s.members.len() as f64;
            raw.extend(s.members.iter().map(|_| T::of(rng.random_range(f64::EPSILON..hi))));
            members.extend_from_slice(&s.members);
            offsets.push(members.len());
        }
        let segments = Arc::new(SegmentLayout::new(members, offsets));
        let incidence = Arc::new(IncidenceLayout {
            segments: (*segments).clone(),
            masters: sets.iter().map(|s| s.master).collect(),
            num_nodes: graph.num_nodes(),
            threshold,
        });
        let types = graph.num_node_types();
        let mut positions = vec![Vec::new(); types];
        for (i, s) in sets.iter().enumerate() {
            positions[s.set_type].push(i);
        }
        let masters_by_type = positions
            .iter()
            .map(|pos| Arc::new(pos.iter().map(|&i| sets[i].master).collect::<Vec<_>>()))
            .collect();
        let p = store.add("hypergen.p", Matrix::row_vector(&raw));
        let theta = positions
            .iter()
            .enumerate()
            .map(|(t, pos)| (!pos.is_empty()).then(|| store.add(format!("hypergen.theta.{t}"), xavier_with(dim, dim, rng))))
            .collect();
        Ok(Self {
            sets,
            segments,
            incidence,
            positions_by_type: Arc::new(positions),
            masters_by_type,
            p,
            theta,
        })
    }

    pub fn sets(&self) -> &[CandidateSet] {
        &self.sets
    }

    pub fn num_hyperedges(&self) -> usize {
        self.sets.len()
    }

    pub fn edge_masters(&self) -> &[usize] {
        &self.incidence.masters
    }

    pub fn edge_types(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.set_type).collect()
    }

    pub fn threshold(&self) -> f64 {
        self.incidence.threshold
    }

    /// Raw coefficients split per set.
    pub fn coefficients<T: Real>(&self, store: &ParamStore<T>) -> Vec<Vec<T>> {
        let flat = store.get(self.p).as_slice();
        (0..self.sets.len())
            .map(|s| flat[self.segments.range(s)].to_vec())
            .collect()
    }

    /// Members with an effective coefficient above the threshold.
    pub fn membership_counts<T: Real>(&self, store: &ParamStore<T>) -> Vec<usize> {
        let thr = T::of(self.incidence.threshold);
        self.coefficients(store)
            .iter()
            .map(|p| p.iter().filter(|&&c| c > thr).count())
            .collect()
    }

    /// Records reconstruction, its loss and the incidence matrix built from
    /// the current coefficients; `x` is the `d×N` embedding node.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        cfg: &HypergenConfig,
    ) -> Result<HypergenOutput> {
        let raw = store.bind(tape, self.p);
        let coeff = tape.relu(raw);
        let x_hat = tape.segment_combine(x, coeff, self.segments.clone());

        let mut parts = Vec::new();
        let mut positions = Vec::new();
        for (t, pos) in self.positions_by_type.iter().enumerate() {
            let Some(theta) = self.theta[t] else { continue };
            let theta = store.bind(tape, theta);
            let xm = tape.gather_columns(x, self.masters_by_type[t].clone());
            parts.push(tape.matmul(theta, xm)?);
            positions.push(pos.clone());
        }
        let target = tape.interleave_columns(&parts, Arc::new(positions));
        let diff = tape.sub(x_hat, target)?;
        let errors = tape.column_norms(diff);

        let err_sum = tape.sum(errors);
        let mut loss = tape.scale(err_sum, T::of(cfg.lambda));
        if cfg.l1 != 0.0 {
            let l1 = tape.l1_norm(coeff);
            let l1 = tape.scale(l1, T::of(cfg.l1));
            loss = tape.add(loss, l1)?;
        }
        if cfg.gamma != 0.0 {
            let norms = tape.segment_norms(coeff, self.segments.clone());
            let l2 = tape.sum(norms);
            let l2 = tape.scale(l2, T::of(cfg.gamma));
            loss = tape.add(loss, l2)?;
        }

        let h = tape.incidence(coeff, self.incidence.clone());
        let edge_degree = tape.column_sums(h);
        Ok(HypergenOutput {
            h,
            edge_degree,
            recon_loss: loss,
            errors,
        })
    }
}
