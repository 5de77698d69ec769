//! Reference evaluations written as direct loops over the formulas, sharing
//! no code with the model. Used only to check the model on tiny inputs.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

pub const MAX_ORACLE_NODES: usize = 8;
pub const MAX_NNLS_MEMBERS: usize = 3;

/// A fully specified tiny hypergraph plus one attention round's parameters.
/// Vectors are plain `Vec<f64>`; matrices are lists of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleInstance {
    pub dim: usize,
    pub heads: usize,
    /// Embedding of every node (`N` vectors of length `dim`).
    pub x: Vec<Vec<f64>>,
    pub node_type: Vec<usize>,
    /// `N` rows of `M` incidence entries.
    pub h: Vec<Vec<f64>>,
    pub edge_master: Vec<usize>,
    pub edge_type: Vec<usize>,
    /// `[node type][head]`, each `dim/heads × dim`.
    pub q_proj: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[edge type][head]`, each `dim/heads × dim`.
    pub k_proj: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[edge type]`, each `dim/heads × dim/heads`.
    pub theta: Vec<Vec<Vec<f64>>>,
    pub mu: Vec<f64>,
    pub w_hidden: Vec<Vec<f64>>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut s = 0.0;
            for k in 0..v.len() {
                s += row[k] * v[k];
            }
            s
        })
        .collect()
}

/// Node representations, one vector per node.
pub fn oracle_forward(inst: &OracleInstance) -> Result<Vec<Vec<f64>>> {
    let n = inst.x.len();
    if n > MAX_ORACLE_NODES {
        return Err(Error::OracleRefused(format!(
            "{n} nodes exceed the oracle limit of {MAX_ORACLE_NODES}"
        )));
    }
    let m = inst.edge_master.len();
    let d = inst.dim;
    let dk = d / inst.heads;

    // hyperedge embeddings
    let mut e_emb = vec![vec![0.0; d]; m];
    for e in 0..m {
        let mut delta = 0.0;
        for v in 0..n {
            delta += inst.h[v][e];
        }
        for k in 0..d {
            let mut s = 0.0;
            for v in 0..n {
                s += inst.x[v][k] * inst.h[v][e];
            }
            e_emb[e][k] = s / delta;
        }
    }

    let mut z = Vec::with_capacity(n);
    for v in 0..n {
        let incident: Vec<usize> = (0..m).filter(|&e| inst.edge_master[e] == v).collect();
        if incident.is_empty() {
            return Err(Error::OracleRefused(format!("node {v} has no hyperedge")));
        }
        let mut concat = Vec::with_capacity(d);
        for hd in 0..inst.heads {
            let q = mat_vec(&inst.q_proj[inst.node_type[v]][hd], &inst.x[v]);
            let mut keys = Vec::new();
            let mut att = Vec::new();
            for &e in &incident {
                let t = inst.edge_type[e];
                let k = mat_vec(&inst.k_proj[t][hd], &e_emb[e]);
                let tk = mat_vec(&inst.theta[t], &k);
                let mut s = 0.0;
                for i in 0..dk {
                    s += q[i] * tk[i];
                }
                att.push(s * inst.mu[t] / (d as f64).sqrt());
                keys.push(k);
            }
            let top = att.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = att.iter().map(|a| (a - top).exp()).collect();
            let total: f64 = ex.iter().sum();
            let mut zh = vec![0.0; dk];
            for (j, k) in keys.iter().enumerate() {
                for i in 0..dk {
                    zh[i] += ex[j] / total * k[i];
                }
            }
            concat.extend(zh);
        }
        let hidden: Vec<f64> = mat_vec(&inst.w_hidden, &concat)
            .iter()
            .zip(&inst.b_hidden)
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let out: Vec<f64> = mat_vec(&inst.w_out, &hidden)
            .iter()
            .zip(&inst.b_out)
            .map(|(a, b)| a + b)
            .collect();
        z.push(out);
    }
    Ok(z)
}

/// Deterministic "hand-set" value in roughly `[-1, 1]`.
fn fixed(i: usize) -> f64 {
    ((i * 37 + 11) % 23) as f64 / 11.0 - 1.0
}

fn fixed_matrix(rows: usize, cols: usize, salt: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|r| (0..cols).map(|c| 0.5 * fixed(salt * 101 + r * cols + c)).collect())
        .collect()
}

/// Four nodes of two types (`A B A B`), `d = 4`, two heads. Every node
/// masters one hyperedge per type with at least one other member, giving
/// eight hyperedges.
pub fn four_node_fixture() -> OracleInstance {
    let node_type = vec![0, 1, 0, 1];
    let (d, heads) = (4, 2);
    let dk = d / heads;
    let x: Vec<Vec<f64>> = (0..4).map(|v| (0..d).map(|k| fixed(v * d + k)).collect()).collect();
    let mut edge_master = Vec::new();
    let mut edge_type = Vec::new();
    let mut cols = Vec::new();
    for v in 0..4 {
        for t in 0..2 {
            let members: Vec<usize> = (0..4).filter(|&u| u != v && node_type[u] == t).collect();
            if members.is_empty() {
                continue;
            }
            let mut col = vec![0.0; 4];
            col[v] = 1.0;
            for (j, &u) in members.iter().enumerate() {
                // one zero entry to exercise the below-threshold case
                col[u] = if (v + j) % 3 == 0 { 0.0 } else { 0.25 + 0.15 * (v + j) as f64 };
            }
            edge_master.push(v);
            edge_type.push(t);
            cols.push(col);
        }
    }
    let h = (0..4).map(|u| cols.iter().map(|c| c[u]).collect()).collect();
    OracleInstance {
        dim: d,
        heads,
        x,
        node_type,
        h,
        edge_master,
        edge_type,
        q_proj: (0..2).map(|t| (0..heads).map(|hd| fixed_matrix(dk, d, 10 + 2 * t + hd)).collect()).collect(),
        k_proj: (0..2).map(|t| (0..heads).map(|hd| fixed_matrix(dk, d, 20 + 2 * t + hd)).collect()).collect(),
        theta: (0..2).map(|t| fixed_matrix(dk, dk, 30 + t)).collect(),
        mu: vec![1.0, 0.8],
        w_hidden: fixed_matrix(d, d, 40),
        b_hidden: (0..d).map(|k| 0.1 * fixed(50 + k)).collect(),
        w_out: fixed_matrix(d, d, 41),
        b_out: (0..d).map(|k| 0.1 * fixed(60 + k)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution {
    pub p: Vec<f64>,
    /// `‖Σ_j p_j·candidates[j] − target‖₂`.
    pub residual: f64,
}

fn residual(candidates: &[Vec<f64>], target: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..target.len() {
        let mut r = -target[k];
        for (j, c) in candidates.iter().enumerate() {
            r += p[j] * c[k];
        }
        s += r * r;
    }
    s.sqrt()
}

/// Solves a small dense system by Gauss–Jordan with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Non-negative least squares over at most three candidate vectors by
/// exhaustive search over supports: for every subset the unconstrained
/// least-squares solution is computed and kept when non-negative.
pub fn oracle_nnls(candidates: &[Vec<f64>], target: &[f64]) -> Result<NnlsSolution> {
    let k = candidates.len();
    if k == 0 || k > MAX_NNLS_MEMBERS {
        return Err(Error::OracleRefused(format!(
            "nnls oracle handles 1..={MAX_NNLS_MEMBERS} candidates, got {k}"
        )));
    }
    let mut best = NnlsSolution {
        p: vec![0.0; k],
        residual: residual(candidates, target, &vec![0.0; k]),
    };
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&j| mask & (1 << j) != 0).collect();
        let gram: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| {
                support
                    .iter()
                    .map(|&j| candidates[i].iter().zip(&candidates[j]).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = support
            .iter()
            .map(|&i| candidates[i].iter().zip(target).map(|(a, b)| a * b).sum())
            .collect();
        let Some(sol) = solve(gram, rhs) else { continue };
        if sol.iter().any(|&x| x < 0.0) {
            continue;
        }
        let mut p = vec![0.0; k];
        for (&j, &x) in support.iter().zip(&sol) {
            p[j] = x;
        }
        let r = residual(candidates, target, &p);
        if r < best.residual {
            best = NnlsSolution { p, residual: r };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_equal_to_target_is_one_hot() {
        let c = vec![vec![1.0, 0.0, 0.0], vec![0.3, 1.0, 0.0], vec![0.0, 0.2, 1.0]];
        let s = oracle_nnls(&c, &c[1]).unwrap();
        assert!((s.p[1] - 1.0).abs() < 1e-12 && s.p[0].abs() < 1e-12 && s.p[2].abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn mean_of_orthonormal_pair() {
        let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = oracle_nnls(&c, &[0.5, 0.5]).unwrap();
        assert!((s.p[0] - 0.5).abs() < 1e-12 && (s.p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_fine_grid() {
        // target outside the cone: optimum lies on the boundary
        let c = vec![vec![1.0, 0.2, 0.1], vec![0.1, 1.0, -0.3]];
        let target = [0.8, -0.5, 0.6];
        let s = oracle_nnls(&c, &target).unwrap();
        let mut grid_best = f64::INFINITY;
        for i in 0..=1500 {
            for j in 0..=1500 {
                let p = [i as f64 * 1e-3, j as f64 * 1e-3];
                grid_best = grid_best.min(residual(&c, &target, &p));
            }
        }
        assert!(s.residual <= grid_best + 1e-12);
        assert!(grid_best - s.residual < 1e-3);
    }

    #[test]
    fn refuses_large_inputs() {
        assert!(oracle_nnls(&vec![vec![1.0]; 4], &[1.0]).is_err());
        let mut inst = four_node_fixture();
        inst.x = vec![vec![0.0; 4]; 9];
        assert!(matches!(oracle_forward(&inst), Err(Error::OracleRefused(_))));
    }

    #[test]
    fn fixture_shape() {
        let inst = four_node_fixture();
        assert_eq!(inst.edge_master.len(), 8);
        for (e, &m) in inst.edge_master.iter().enumerate() {
            assert_eq!(inst.h[m][e], 1.0);
        }
        assert!(inst.h.iter().flatten().any(|&v| v == 0.0));
        let z = oracle_forward(&inst).unwrap();
        assert_eq!(z.len(), 4);
        assert!(z.iter().flatten().all(|v| v.is_finite()));
    }
}
