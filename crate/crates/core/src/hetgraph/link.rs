use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hetgraph::{Edge, HetPairGraph};
use crate::numcore::stream_rng;

/// Edges kept for training plus balanced positive/negative evaluation pairs.
///
/// Pairs are undirected and stored as `(min, max)`. Hiding works on
/// undirected node pairs: every stored edge between the same two nodes, in
/// either direction, is hidden or kept together.
#[derive(Clone, Debug)]
pub struct LinkSplit {
    pub residual_edges: Vec<Edge>,
    pub positive_pairs: Vec<(usize, usize)>,
    pub negative_pairs: Vec<(usize, usize)>,
    /// Pairs that `fraction` asked for.
    pub requested: usize,
    /// Set when fewer pairs than requested could be hidden.
    pub warning: Option<String>,
}

impl LinkSplit {
    pub fn residual_graph(&self, graph: &HetPairGraph) -> Result<HetPairGraph> {
        graph.with_edges(self.residual_edges.clone())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Hides a `fraction` of the undirected node pairs while keeping every
/// connected component connected, then draws as many non-adjacent pairs
/// as negatives.
///
/// A random spanning forest is protected first; hidden pairs come only
/// from the remaining edges, so sparse graphs may hide fewer pairs than
/// requested (reported in [`LinkSplit::warning`]).
pub fn hide_edges(graph: &HetPairGraph, fraction: f64, seed: u64) -> Result<LinkSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("hide fraction must lie in (0, 1), got {fraction}")));
    }
    let n = graph.num_nodes();
    let mut units: Vec<(usize, usize)> = graph.edges().iter().map(|e| canonical(e.src, e.dst)).collect();
    units.sort_unstable();
    units.dedup();

    let mut rng = stream_rng(seed, "hide_edges");
    let mut order = units.clone();
    order.shuffle(&mut rng);

    let mut dsu = DisjointSet::new(n);
    let mut candidates = Vec::new();
    for &(a, b) in &order {
        if !dsu.union(a, b) {
            candidates.push((a, b));
        }
    }

    let requested = (fraction * units.len() as f64).round() as usize;
    let hidden_count = requested.min(candidates.len());
    let warning = (hidden_count < requested).then(|| {
        format!(
            "only {hidden_count} of {requested} requested pairs can be hidden without disconnecting the graph"
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let mut positives: Vec<(usize, usize)> = candidates[..hidden_count].to_vec();
    positives.sort_unstable();
    let hidden: HashSet<(usize, usize)> = positives.iter().copied().collect();

    let residual_edges: Vec<Edge> = graph
        .edges()
        .iter()
        .filter(|e| !hidden.contains(&canonical(e.src, e.dst)))
        .copied()
        .collect();

    let negatives = sample_non_edges(n, &units, hidden_count, &mut rng)?;

    Ok(LinkSplit {
        residual_edges,
        positive_pairs: positives,
        negative_pairs: negatives,
        requested,
        warning,
    })
}

fn sample_non_edges(
    n: usize,
    units: &[(usize, usize)],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    let existing: HashSet<(usize, usize)> = units.iter().copied().collect();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available = total_pairs - existing.len();
    if available < count {
        return Err(Error::LinkPrediction(format!(
            "need {count} negative pairs but only {available} non-adjacent pairs exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<(usize, usize)>;
    if available < 4 * count {
        // dense: enumerate then sample without replacement
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|p| !existing.contains(p))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        out = all;
    } else {
        let mut chosen = HashSet::with_capacity(count);
        out = Vec::with_capacity(count);
        while out.len() < count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let p = canonical(a, b);
            if existing.contains(&p) || !chosen.insert(p) {
                continue;
            }
            out.push(p);
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;

    fn undirected(n: usize, pairs: &[(usize, usize)]) -> HetPairGraph {
        let edges = pairs
            .iter()
            .flat_map(|&(a, b)| [Edge { src: a, dst: b, etype: 0 }, Edge { src: b, dst: a, etype: 0 }])
            .collect();
        HetPairGraph::new(vec![0; n], vec!["t".into()], edges, vec!["e".into()], Matrix::zeros(1, n), None).unwrap()
    }

    /// Component id per node by breadth-first search over an edge list.
    fn components(n: usize, edges: &[Edge]) -> Vec<usize> {
        let mut adj = vec![Vec::new(); n];
        for e in edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([s]);
            comp[s] = next;
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    #[test]
    fn tree_hides_nothing() {
        let g = undirected(4, &[(0, 1), (1, 2), (1, 3)]);
        let s = hide_edges(&g, 0.5, 1).unwrap();
        assert!(s.positive_pairs.is_empty());
        assert!(s.negative_pairs.is_empty());
        assert!(s.warning.is_some());
        assert_eq!(s.residual_edges.len(), g.num_edges());
    }

    #[test]
    fn four_cycle() {
        // Any single removal leaves a path (connected); removing two always
        // disconnects. Enumerating: 4 pairs, requested round(0.5·4) = 2,
        // spanning tree keeps 3, so exactly one pair is hidden.
        let g = undirected(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        for seed in 0..20 {
            let s = hide_edges(&g, 0.5, seed).unwrap();
            assert!((1..=2).contains(&s.positive_pairs.len()));
            let comp = components(4, &s.residual_edges);
            assert!(comp.iter().all(|&c| c == comp[0]));
            assert_eq!(s.negative_pairs.len(), s.positive_pairs.len());
        }
    }

    #[test]
    fn both_directions_hidden_together() {
        let g = undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (1, 3)]);
        let s = hide_edges(&g, 0.5, 3).unwrap();
        for &(a, b) in &s.positive_pairs {
            assert!(!s
                .residual_edges
                .iter()
                .any(|e| canonical(e.src, e.dst) == (a, b)));
        }
        assert_eq!(
            s.residual_edges.len(),
            g.num_edges() - 2 * s.positive_pairs.len()
        );
    }

    #[test]
    fn negatives_are_non_edges() {
        let mut pairs = Vec::new();
        for i in 0..30 {
            pairs.push((i, (i + 1) % 30));
            pairs.push((i, (i + 7) % 30));
        }
        let g = undirected(30, &pairs);
        let s = hide_edges(&g, 0.5, 9).unwrap();
        let existing: HashSet<(usize, usize)> = pairs.iter().map(|&(a, b)| canonical(a, b)).collect();
        assert_eq!(s.negative_pairs.len(), s.positive_pairs.len());
        assert!(s.negative_pairs.iter().all(|p| !existing.contains(p) && p.0 < p.1));
        let distinct: HashSet<_> = s.negative_pairs.iter().collect();
        assert_eq!(distinct.len(), s.negative_pairs.len());
        let comp_before = components(30, g.edges());
        let comp_after = components(30, &s.residual_edges);
        assert_eq!(comp_before, comp_after);
    }

    #[test]
    fn rejects_bad_fraction() {
        let g = undirected(3, &[(0, 1), (1, 2)]);
        assert!(hide_edges(&g, 0.0, 0).is_err());
        assert!(hide_edges(&g, 1.0, 0).is_err());
    }
}
