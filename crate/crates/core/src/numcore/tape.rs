//! Dynamic reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass in creation order,
//! which is already a topological order. [`Tape::backward`] sweeps it in
//! reverse and sums gradient contributions at shared nodes. The tape is
//! rebuilt on every forward pass, so operations whose structure depends on
//! current parameter values (e.g. hyperedge membership) need no special
//! handling.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamId, Real};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Concatenated variable-length segments over a flat coefficient vector.
///
/// Segment `s` spans `offsets[s]..offsets[s + 1]`; entry `j` of the flat
/// vector refers to column `members[j]` of some matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentLayout {
    pub members: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl SegmentLayout {
    pub fn new(members: Vec<usize>, offsets: Vec<usize>) -> Self {
        assert!(!offsets.is_empty() && offsets[0] == 0);
        assert_eq!(*offsets.last().unwrap(), members.len());
        assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
        Self { members, offsets }
    }

    pub fn num_segments(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    #[inline]
    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }
}

/// Incidence structure: one column per segment, master row fixed at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceLayout {
    pub segments: SegmentLayout,
    pub masters: Vec<usize>,
    pub num_nodes: usize,
    pub threshold: f64,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, T),
    MulScalar(Var, Var),
    AddColumn(Var, Var),
    Relu(Var),
    Mask(Var, Matrix<T>),
    GatherColumns(Var, Arc<Vec<usize>>),
    Interleave(Vec<Var>, Arc<Vec<Vec<usize>>>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    Sum(Var),
    L1(Var),
    L2(Var),
    ColumnNorms(Var),
    SegmentNorms(Var, Arc<SegmentLayout>),
    SegmentCombine(Var, Var, Arc<SegmentLayout>),
    Incidence(Var, Arc<IncidenceLayout>),
    ColumnSums(Var),
    DivColumns(Var, Var),
    SoftmaxGroups(Arc<Vec<Vec<usize>>>),
    PairBilinear(Var, Var, Arc<Vec<(usize, usize)>>, usize),
    PairAggregate(Var, Var, Arc<Vec<(usize, usize)>>),
    CrossEntropy(Var, Arc<Vec<usize>>),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    parents: Vec<Var>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient w.r.t. `v`; zero when `v` is not on a path to the loss.
    pub fn wrt(&self, v: Var) -> Matrix<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn shape_err<T: Real>(op: &'static str, a: &Matrix<T>, b: &Matrix<T>) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, parents: Vec<Var>) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            parents,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            parents: Vec::new(),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            parents: Vec::new(),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf registered against a parameter slot.
    pub fn param(&mut self, id: ParamId, value: Matrix<T>) -> Var {
        let v = self.leaf(value);
        self.params.push((id, v));
        v
    }

    pub fn registered_params(&self) -> &[(ParamId, Var)] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// First node (in creation order) holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<Var> {
        self.nodes
            .iter()
            .position(|n| !n.value.is_finite())
            .map(Var)
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        match &self.nodes[v.0].op {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Scale(..) => "scale",
            Op::MulScalar(..) => "mul_scalar",
            Op::AddColumn(..) => "add_column",
            Op::Relu(..) => "relu",
            Op::Mask(..) => "dropout",
            Op::GatherColumns(..) => "gather_columns",
            Op::Interleave(..) => "interleave_columns",
            Op::SliceRows(..) => "slice_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::Sum(..) => "sum",
            Op::L1(..) => "l1_norm",
            Op::L2(..) => "l2_norm",
            Op::ColumnNorms(..) => "column_norms",
            Op::SegmentNorms(..) => "segment_norms",
            Op::SegmentCombine(..) => "segment_combine",
            Op::Incidence(..) => "incidence",
            Op::ColumnSums(..) => "column_sums",
            Op::DivColumns(..) => "div_columns",
            Op::SoftmaxGroups(..) => "softmax_per_group",
            Op::PairBilinear(..) => "pair_bilinear",
            Op::PairAggregate(..) => "pair_aggregate",
            Op::CrossEntropy(..) => "cross_entropy",
        }
    }

    // ---------------------------------------------------------------------
    // forward operations
    // ---------------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), vec![a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let value = va.zip_map(vb, |x, y| x + y).map_err(|_| shape_err("add", va, vb))?;
        Ok(self.push(value, Op::Add(a, b), vec![a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let value = va.zip_map(vb, |x, y| x - y).map_err(|_| shape_err("sub", va, vb))?;
        Ok(self.push(value, Op::Sub(a, b), vec![a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let value = va
            .zip_map(vb, |x, y| x * y)
            .map_err(|_| shape_err("hadamard", va, vb))?;
        Ok(self.push(value, Op::Hadamard(a, b), vec![a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s), vec![a])
    }

    /// `s * a` where `s` is a `1×1` node.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let value = self.value(a).scale(sv);
        self.push(value, Op::MulScalar(a, s), vec![a, s])
    }

    /// Adds column vector `b` (`r×1`) to every column of `a` (`r×n`).
    pub fn add_column(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.cols() != 1 || vb.rows() != va.rows() {
            return Err(shape_err("add_column", va, vb));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            let bias = vb.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|x| *x += bias);
        }
        Ok(self.push(value, Op::AddColumn(a, b), vec![a, b]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(value, Op::Relu(a), vec![a])
    }

    /// Elementwise product with a constant mask (dropout with a precomputed
    /// keep-and-rescale mask).
    pub fn mask(&mut self, a: Var, mask: Matrix<T>) -> Result<Var> {
        let va = self.value(a);
        let value = va.zip_map(&mask, |x, m| x * m).map_err(|_| shape_err("dropout", va, &mask))?;
        Ok(self.push(value, Op::Mask(a, mask), vec![a]))
    }

    pub fn gather_columns(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let va = self.value(a);
        assert!(idx.iter().all(|&j| j < va.cols()), "gather index out of range");
        let value = va.select_columns(&idx);
        self.push(value, Op::GatherColumns(a, idx), vec![a])
    }

    /// Assembles a matrix with `positions[t][j]` holding column `j` of
    /// `parts[t]`. Positions must form a partition of `0..total`.
    pub fn interleave_columns(&mut self, parts: &[Var], positions: Arc<Vec<Vec<usize>>>) -> Var {
        assert_eq!(parts.len(), positions.len());
        let rows = self.value(parts[0]).rows();
        let total: usize = positions.iter().map(Vec::len).sum();
        let mut value = Matrix::zeros(rows, total);
        for (p, pos) in parts.iter().zip(positions.iter()) {
            let vp = self.value(*p);
            assert_eq!(vp.shape(), (rows, pos.len()), "interleave part shape");
            for r in 0..rows {
                let src = vp.row(r);
                let dst = value.row_mut(r);
                for (j, &c) in pos.iter().enumerate() {
                    dst[c] = src[j];
                }
            }
        }
        self.push(value, Op::Interleave(parts.to_vec(), positions), parts.to_vec())
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let va = self.value(a);
        assert!(start <= end && end <= va.rows());
        let cols = va.cols();
        let data = va.as_slice()[start * cols..end * cols].to_vec();
        let value = Matrix::from_vec(end - start, cols, data).expect("slice shape");
        self.push(value, Op::SliceRows(a, start), vec![a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let vp = self.value(p);
            if vp.cols() != cols {
                return Err(shape_err("concat_rows", self.value(parts[0]), vp));
            }
            rows += vp.rows();
            data.extend_from_slice(vp.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), vec![a])
    }

    /// `Σ|vᵢ|`; subgradient at zero is 0.
    pub fn l1_norm(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).as_slice().iter().map(|x| x.abs()).sum());
        self.push(value, Op::L1(a), vec![a])
    }

    /// `sqrt(Σvᵢ²)`; subgradient at the zero vector is 0.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let s: T = self.value(a).as_slice().iter().map(|&x| x * x).sum();
        let value = Matrix::scalar(s.sqrt());
        self.push(value, Op::L2(a), vec![a])
    }

    /// Euclidean norm of every column, as a `1×n` row.
    pub fn column_norms(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut sq = vec![T::zero(); va.cols()];
        for r in 0..va.rows() {
            for (s, &x) in sq.iter_mut().zip(va.row(r)) {
                *s += x * x;
            }
        }
        let value = Matrix::row_vector(&sq.iter().map(|s| s.sqrt()).collect::<Vec<_>>());
        self.push(value, Op::ColumnNorms(a), vec![a])
    }

    /// Euclidean norm of every segment of a `1×L` row, as a `1×S` row.
    pub fn segment_norms(&mut self, a: Var, layout: Arc<SegmentLayout>) -> Var {
        let va = self.value(a);
        assert_eq!(va.shape(), (1, layout.len()), "segment_norms expects a 1×L row");
        let x = va.as_slice();
        let norms: Vec<T> = (0..layout.num_segments())
            .map(|s| x[layout.range(s)].iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let value = Matrix::row_vector(&norms);
        self.push(value, Op::SegmentNorms(a, layout), vec![a])
    }

    /// Column `s` of the output is `Σ_{j∈seg s} coeff[j] · x[:, members[j]]`.
    pub fn segment_combine(&mut self, x: Var, coeff: Var, layout: Arc<SegmentLayout>) -> Var {
        let (vx, vc) = (self.value(x), self.value(coeff));
        assert_eq!(vc.shape(), (1, layout.len()), "segment_combine coefficient shape");
        assert!(layout.members.iter().all(|&m| m < vx.cols()));
        let xt = vx.transpose();
        let d = vx.rows();
        let c = vc.as_slice();
        let mut out_t = vec![T::zero(); layout.num_segments() * d];
        for s in 0..layout.num_segments() {
            let dst = &mut out_t[s * d..(s + 1) * d];
            for j in layout.range(s) {
                let w = c[j];
                if w == T::zero() {
                    continue;
                }
                let src = xt.row(layout.members[j]);
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        let value = Matrix::from_vec(layout.num_segments(), d, out_t)
            .expect("segment shape")
            .transpose();
        self.push(value, Op::SegmentCombine(x, coeff, layout), vec![x, coeff])
    }

    /// Dense `N×S` incidence matrix: master entry 1, member entry
    /// `min(c, 1)` when `c > threshold`, else exactly 0.
    pub fn incidence(&mut self, coeff: Var, layout: Arc<IncidenceLayout>) -> Var {
        let vc = self.value(coeff);
        let seg = &layout.segments;
        assert_eq!(vc.shape(), (1, seg.len()), "incidence coefficient shape");
        let thr = T::of(layout.threshold);
        let c = vc.as_slice();
        let s_count = seg.num_segments();
        let mut value = Matrix::zeros(layout.num_nodes, s_count);
        for s in 0..s_count {
            value.set(layout.masters[s], s, T::one());
            for j in seg.range(s) {
                let p = c[j];
                if p > thr {
                    value.set(seg.members[j], s, p.min(T::one()));
                }
            }
        }
        self.push(value, Op::Incidence(coeff, layout), vec![coeff])
    }

    pub fn column_sums(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut sums = vec![T::zero(); va.cols()];
        for r in 0..va.rows() {
            for (s, &x) in sums.iter_mut().zip(va.row(r)) {
                *s += x;
            }
        }
        let value = Matrix::row_vector(&sums);
        self.push(value, Op::ColumnSums(a), vec![a])
    }

    /// Divides column `j` of `a` by `v[j]` (`v` is `1×n`).
    pub fn div_columns(&mut self, a: Var, v: Var) -> Result<Var> {
        let (va, vv) = (self.value(a), self.value(v));
        if vv.shape() != (1, va.cols()) {
            return Err(shape_err("div_columns", va, vv));
        }
        let mut value = va.clone();
        let den = vv.as_slice();
        for r in 0..value.rows() {
            for (x, &d) in value.row_mut(r).iter_mut().zip(den) {
                *x /= d;
            }
        }
        Ok(self.push(value, Op::DivColumns(a, v), vec![a, v]))
    }

    /// Row-wise softmax inside each column group. Groups must be nonempty.
    pub fn softmax_per_group(&mut self, a: Var, groups: Arc<Vec<Vec<usize>>>) -> Var {
        let va = self.value(a);
        let value = softmax_groups_value(va, &groups);
        self.push(value, Op::SoftmaxGroups(groups), vec![a])
    }

    /// `out[h, p] = Σ_{k ∈ block h} q[k, u_p] · b[k, e_p]` for pairs `(u_p, e_p)`,
    /// with rows split into `heads` equal blocks.
    pub fn pair_bilinear(
        &mut self,
        q: Var,
        b: Var,
        pairs: Arc<Vec<(usize, usize)>>,
        heads: usize,
    ) -> Result<Var> {
        let (vq, vb) = (self.value(q), self.value(b));
        if vq.rows() != vb.rows() || heads == 0 || vq.rows() % heads != 0 {
            return Err(shape_err("pair_bilinear", vq, vb));
        }
        let dk = vq.rows() / heads;
        let (qt, bt) = (vq.transpose(), vb.transpose());
        let mut value = Matrix::zeros(heads, pairs.len());
        for (p, &(u, e)) in pairs.iter().enumerate() {
            let (qu, be) = (qt.row(u), bt.row(e));
            for h in 0..heads {
                let blk = h * dk..(h + 1) * dk;
                let s: T = qu[blk.clone()].iter().zip(&be[blk]).map(|(&x, &y)| x * y).sum();
                value.set(h, p, s);
            }
        }
        Ok(self.push(value, Op::PairBilinear(q, b, pairs, heads), vec![q, b]))
    }

    /// `out[k, u] = Σ_{p: u_p = u} w[h(k), p] · kmat[k, e_p]` where `h(k)` is the
    /// head block of row `k`; output has `num_targets` columns.
    pub fn pair_aggregate(
        &mut self,
        w: Var,
        kmat: Var,
        pairs: Arc<Vec<(usize, usize)>>,
        num_targets: usize,
    ) -> Result<Var> {
        let (vw, vk) = (self.value(w), self.value(kmat));
        let heads = vw.rows();
        if vw.cols() != pairs.len() || heads == 0 || vk.rows() % heads != 0 {
            return Err(shape_err("pair_aggregate", vw, vk));
        }
        let d = vk.rows();
        let dk = d / heads;
        let kt = vk.transpose();
        let mut out_t = vec![T::zero(); num_targets * d];
        for (p, &(u, e)) in pairs.iter().enumerate() {
            let src = kt.row(e);
            let dst = &mut out_t[u * d..(u + 1) * d];
            for h in 0..heads {
                let wh = vw.get(h, p);
                for k in h * dk..(h + 1) * dk {
                    dst[k] += wh * src[k];
                }
            }
        }
        let value = Matrix::from_vec(num_targets, d, out_t)?.transpose();
        Ok(self.push(value, Op::PairAggregate(w, kmat, pairs), vec![w, kmat]))
    }

    /// Mean negative log-likelihood of `labels[j]` under the column-wise
    /// softmax of `logits` (`classes×n`).
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>) -> Var {
        let vl = self.value(logits);
        assert_eq!(vl.cols(), labels.len(), "one label per logit column");
        assert!(!labels.is_empty(), "cross_entropy over an empty batch");
        let n = T::of(labels.len() as f64);
        let mut total = T::zero();
        for (j, &y) in labels.iter().enumerate() {
            assert!(y < vl.rows(), "label {y} out of range");
            let col = vl.column(j);
            total += log_sum_exp(&col) - col[y];
        }
        let value = Matrix::scalar(total / n);
        self.push(value, Op::CrossEntropy(logits, labels), vec![logits])
    }

    // ---------------------------------------------------------------------
    // reverse sweep
    // ---------------------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Panics if `loss` is not `1×1`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward requires a scalar loss");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.wants(*a) {
                    let mut da = Matrix::zeros(m, k);
                    T::gemm(m, n, k, T::one(), g.as_slice(), false, vb.as_slice(), true, T::zero(), da.as_mut_slice());
                    accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = Matrix::zeros(k, n);
                    T::gemm(k, m, n, T::one(), va.as_slice(), true, g.as_slice(), false, T::zero(), db.as_mut_slice());
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.scale(-T::one()));
                }
            }
            Op::Hadamard(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y).unwrap());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y).unwrap());
                }
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::MulScalar(a, s) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.scale(val(*s).item()));
                }
                if self.wants(*s) {
                    let ds: T = g.as_slice().iter().zip(val(*a).as_slice()).map(|(&x, &y)| x * y).sum();
                    accumulate(grads, *s, Matrix::scalar(ds));
                }
            }
            Op::AddColumn(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    let sums: Vec<T> = (0..g.rows()).map(|r| g.row(r).iter().copied().sum()).collect();
                    accumulate(grads, *b, Matrix::column_vector(&sums));
                }
            }
            Op::Relu(a) => {
                let da = g.zip_map(val(*a), |gx, x| if x > T::zero() { gx } else { T::zero() }).unwrap();
                accumulate(grads, *a, da);
            }
            Op::Mask(a, mask) => accumulate(grads, *a, g.zip_map(mask, |x, m| x * m).unwrap()),
            Op::GatherColumns(a, idx) => {
                let va = val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..g.rows() {
                    let src = g.row(r);
                    let dst = da.row_mut(r);
                    for (j, &c) in idx.iter().enumerate() {
                        dst[c] += src[j];
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::Interleave(parts, positions) => {
                for (p, pos) in parts.iter().zip(positions.iter()) {
                    if self.wants(*p) {
                        accumulate(grads, *p, g.select_columns(pos));
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let va = val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                let cols = va.cols();
                da.as_mut_slice()[start * cols..start * cols + g.len()].copy_from_slice(g.as_slice());
                accumulate(grads, *a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let cols = g.cols();
                for p in parts {
                    let rows = val(*p).rows();
                    if self.wants(*p) {
                        let data = g.as_slice()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(grads, *p, Matrix::from_vec(rows, cols, data).unwrap());
                    }
                    offset += rows;
                }
            }
            Op::Sum(a) => {
                let va = val(*a);
                accumulate(grads, *a, Matrix::filled(va.rows(), va.cols(), g.item()));
            }
            Op::L1(a) => {
                let gs = g.item();
                let da = val(*a).map(|x| {
                    if x > T::zero() {
                        gs
                    } else if x < T::zero() {
                        -gs
                    } else {
                        T::zero()
                    }
                });
                accumulate(grads, *a, da);
            }
            Op::L2(a) => {
                let norm = node.value.item();
                let da = if norm > T::zero() {
                    val(*a).scale(g.item() / norm)
                } else {
                    let va = val(*a);
                    Matrix::zeros(va.rows(), va.cols())
                };
                accumulate(grads, *a, da);
            }
            Op::ColumnNorms(a) => {
                let va = val(*a);
                let norms = node.value.as_slice();
                let factor: Vec<T> = norms
                    .iter()
                    .zip(g.as_slice())
                    .map(|(&n, &gn)| if n > T::zero() { gn / n } else { T::zero() })
                    .collect();
                let mut da = va.clone();
                for r in 0..da.rows() {
                    for (x, &f) in da.row_mut(r).iter_mut().zip(&factor) {
                        *x *= f;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::SegmentNorms(a, layout) => {
                let va = val(*a);
                let x = va.as_slice();
                let norms = node.value.as_slice();
                let mut da = vec![T::zero(); x.len()];
                for (s, &norm) in norms.iter().enumerate() {
                    if norm > T::zero() {
                        let f = g.as_slice()[s] / norm;
                        for j in layout.range(s) {
                            da[j] = x[j] * f;
                        }
                    }
                }
                accumulate(grads, *a, Matrix::row_vector(&da));
            }
            Op::SegmentCombine(x, coeff, layout) => {
                let (vx, vc) = (val(*x), val(*coeff));
                let d = vx.rows();
                let gt = g.transpose();
                let c = vc.as_slice();
                if self.wants(*x) {
                    let mut dxt = vec![T::zero(); vx.cols() * d];
                    for s in 0..layout.num_segments() {
                        let gs = gt.row(s);
                        for j in layout.range(s) {
                            let w = c[j];
                            if w == T::zero() {
                                continue;
                            }
                            let m = layout.members[j];
                            for (o, &v) in dxt[m * d..(m + 1) * d].iter_mut().zip(gs) {
                                *o += w * v;
                            }
                        }
                    }
                    let dx = Matrix::from_vec(vx.cols(), d, dxt).unwrap().transpose();
                    accumulate(grads, *x, dx);
                }
                if self.wants(*coeff) {
                    let xt = vx.transpose();
                    let mut dc = vec![T::zero(); c.len()];
                    for s in 0..layout.num_segments() {
                        let gs = gt.row(s);
                        for j in layout.range(s) {
                            let xm = xt.row(layout.members[j]);
                            dc[j] = gs.iter().zip(xm).map(|(&a, &b)| a * b).sum();
                        }
                    }
                    accumulate(grads, *coeff, Matrix::row_vector(&dc));
                }
            }
            Op::Incidence(coeff, layout) => {
                let c = val(*coeff).as_slice();
                let thr = T::of(layout.threshold);
                let seg = &layout.segments;
                let mut dc = vec![T::zero(); c.len()];
                for s in 0..seg.num_segments() {
                    for j in seg.range(s) {
                        if c[j] > thr && c[j] < T::one() {
                            dc[j] = g.get(seg.members[j], s);
                        }
                    }
                }
                accumulate(grads, *coeff, Matrix::row_vector(&dc));
            }
            Op::ColumnSums(a) => {
                let va = val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..da.rows() {
                    da.row_mut(r).copy_from_slice(g.as_slice());
                }
                accumulate(grads, *a, da);
            }
            Op::DivColumns(a, v) => {
                let (va, vv) = (val(*a), val(*v));
                let den = vv.as_slice();
                if self.wants(*a) {
                    let mut da = g.clone();
                    for r in 0..da.rows() {
                        for (x, &d) in da.row_mut(r).iter_mut().zip(den) {
                            *x /= d;
                        }
                    }
                    accumulate(grads, *a, da);
                }
                if self.wants(*v) {
                    let mut dv = vec![T::zero(); den.len()];
                    for r in 0..va.rows() {
                        for (j, (&gx, &ax)) in g.row(r).iter().zip(va.row(r)).enumerate() {
                            dv[j] -= gx * ax / (den[j] * den[j]);
                        }
                    }
                    accumulate(grads, *v, Matrix::row_vector(&dv));
                }
            }
            Op::SoftmaxGroups(groups) => {
                let a = node.parents[0];
                let y = &node.value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dr = da.row_mut(r);
                    for grp in groups.iter() {
                        let dot: T = grp.iter().map(|&c| yr[c] * gr[c]).sum();
                        for &c in grp {
                            dr[c] = yr[c] * (gr[c] - dot);
                        }
                    }
                }
                accumulate(grads, a, da);
            }
            Op::PairBilinear(q, b, pairs, heads) => {
                let (vq, vb) = (val(*q), val(*b));
                let d = vq.rows();
                let dk = d / heads;
                let (qt, bt) = (vq.transpose(), vb.transpose());
                let want_q = self.wants(*q);
                let want_b = self.wants(*b);
                let mut dqt = vec![T::zero(); if want_q { vq.cols() * d } else { 0 }];
                let mut dbt = vec![T::zero(); if want_b { vb.cols() * d } else { 0 }];
                for (p, &(u, e)) in pairs.iter().enumerate() {
                    for h in 0..*heads {
                        let gs = g.get(h, p);
                        for k in h * dk..(h + 1) * dk {
                            if want_q {
                                dqt[u * d + k] += gs * bt.get(e, k);
                            }
                            if want_b {
                                dbt[e * d + k] += gs * qt.get(u, k);
                            }
                        }
                    }
                }
                if want_q {
                    accumulate(grads, *q, Matrix::from_vec(vq.cols(), d, dqt).unwrap().transpose());
                }
                if want_b {
                    accumulate(grads, *b, Matrix::from_vec(vb.cols(), d, dbt).unwrap().transpose());
                }
            }
            Op::PairAggregate(w, kmat, pairs) => {
                let (vw, vk) = (val(*w), val(*kmat));
                let heads = vw.rows();
                let d = vk.rows();
                let dk = d / heads;
                let gt = g.transpose();
                let kt = vk.transpose();
                if self.wants(*w) {
                    let mut dw = Matrix::zeros(heads, pairs.len());
                    for (p, &(u, e)) in pairs.iter().enumerate() {
                        let (gu, ke) = (gt.row(u), kt.row(e));
                        for h in 0..heads {
                            let blk = h * dk..(h + 1) * dk;
                            let s: T = gu[blk.clone()].iter().zip(&ke[blk]).map(|(&x, &y)| x * y).sum();
                            dw.set(h, p, s);
                        }
                    }
                    accumulate(grads, *w, dw);
                }
                if self.wants(*kmat) {
                    let mut dkt = vec![T::zero(); vk.cols() * d];
                    for (p, &(u, e)) in pairs.iter().enumerate() {
                        let gu = gt.row(u);
                        for h in 0..heads {
                            let wh = vw.get(h, p);
                            for k in h * dk..(h + 1) * dk {
                                dkt[e * d + k] += wh * gu[k];
                            }
                        }
                    }
                    accumulate(grads, *kmat, Matrix::from_vec(vk.cols(), d, dkt).unwrap().transpose());
                }
            }
            Op::CrossEntropy(logits, labels) => {
                let vl = val(*logits);
                let n = T::of(labels.len() as f64);
                let scale = g.item() / n;
                let mut dl = Matrix::zeros(vl.rows(), vl.cols());
                for (j, &y) in labels.iter().enumerate() {
                    let col = vl.column(j);
                    let lse = log_sum_exp(&col);
                    for (r, &z) in col.iter().enumerate() {
                        let p = (z - lse).exp();
                        let t = if r == y { T::one() } else { T::zero() };
                        dl.set(r, j, (p - t) * scale);
                    }
                }
                accumulate(grads, *logits, dl);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(T::one(), &g),
        slot @ None => *slot = Some(g),
    }
}

pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_groups_value<T: Real>(a: &Matrix<T>, groups: &[Vec<usize>]) -> Matrix<T> {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let src = a.row(r);
        let dst = out.row_mut(r);
        for grp in groups {
            assert!(!grp.is_empty(), "softmax over an empty group");
            let max = grp.iter().map(|&c| src[c]).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for &c in grp {
                let e = (src[c] - max).exp();
                dst[c] = e;
                z += e;
            }
            for &c in grp {
                dst[c] /= z;
            }
        }
    }
    out
}
