use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::hetgraph::HetPairGraph;
use crate::numcore::stream_rng;

/// Disjoint train/validation/test node sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `total` slots over classes of the
/// given sizes. Ties go to the lower class id.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let mut rem: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(c, &s)| (total * s % n, c))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - quota.iter().sum::<usize>();
    for &(_, c) in rem.iter().take(missing) {
        quota[c] += 1;
    }
    quota
}

/// Class-stratified random split of the labeled nodes.
///
/// Train and validation sizes are `round(ratio × labeled)`; the test set is
/// every remaining labeled node. Train nodes are drawn only from nodes with
/// at least one incident edge.
pub fn split_nodes(graph: &HetPairGraph, train_ratio: f64, val_ratio: f64, seed: u64) -> Result<NodeSplit> {
    if !(train_ratio > 0.0 && val_ratio > 0.0 && train_ratio + val_ratio <= 1.0) {
        return Err(Error::Split(format!(
            "ratios must be positive with sum <= 1, got train={train_ratio} val={val_ratio}"
        )));
    }
    if !graph.is_labeled() {
        return Err(Error::Split("graph has no labels".into()));
    }
    let classes = graph.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for v in 0..graph.num_nodes() {
        if let Some(c) = graph.label(v) {
            by_class[c].push(v);
        }
    }
    let labeled: usize = by_class.iter().map(Vec::len).sum();
    let n_train = (train_ratio * labeled as f64).round() as usize;
    let n_val = (val_ratio * labeled as f64).round() as usize;
    if n_train == 0 || n_train + n_val > labeled {
        return Err(Error::Split(format!(
            "{labeled} labeled nodes cannot hold {n_train} train and {n_val} validation nodes"
        )));
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let train_q = apportion(n_train, &sizes);
    let val_q = apportion(n_val, &sizes);
    let degree = graph.incident_counts();
    // every non-empty split needs a slot in every class
    let slots = 1 + usize::from(n_val > 0) + usize::from(n_train + n_val < labeled);
    if let Some(c) = sizes.iter().position(|&s| s < slots) {
        return Err(Error::Split(format!(
            "class {c} has {} labeled nodes, fewer than the {slots} split slots",
            sizes[c]
        )));
    }

    let mut rng = stream_rng(seed, "split_nodes");
    let mut split = NodeSplit {
        train: Vec::with_capacity(n_train),
        val: Vec::with_capacity(n_val),
        test: Vec::new(),
    };
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if train_q[c] + val_q[c] > nodes.len() {
            return Err(Error::Split(format!(
                "class {c} has {} labeled nodes but needs {} train + {} validation slots",
                nodes.len(),
                train_q[c],
                val_q[c]
            )));
        }
        nodes.shuffle(&mut rng);
        let (connected, isolated): (Vec<usize>, Vec<usize>) =
            nodes.iter().partition(|&&v| degree[v] > 0);
        if connected.len() < train_q[c] {
            return Err(Error::Split(format!(
                "class {c} has {} nodes with an incident edge but needs {} train nodes",
                connected.len(),
                train_q[c]
            )));
        }
        split.train.extend_from_slice(&connected[..train_q[c]]);
        // remaining nodes keep their shuffled order
        let mut rest: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|v| !connected[..train_q[c]].contains(v))
            .collect();
        debug_assert_eq!(rest.len() + train_q[c], connected.len() + isolated.len());
        let tail = rest.split_off(val_q[c]);
        split.val.extend(rest);
        split.test.extend(tail);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{Edge, HetPairGraph};
    use crate::numcore::Matrix;

    /// `n` labeled nodes in `classes` round-robin classes, ring edges.
    fn ring(n: usize, classes: usize) -> HetPairGraph {
        let edges = (0..n)
            .map(|i| Edge { src: i, dst: (i + 1) % n, etype: 0 })
            .collect();
        HetPairGraph::new(
            vec![0; n],
            vec!["t".into()],
            edges,
            vec!["e".into()],
            Matrix::zeros(1, n),
            Some((0..n).map(|i| Some(i % classes)).collect()),
        )
        .unwrap()
    }

    #[test]
    fn standard_ratios_on_hundred_nodes() {
        let g = ring(100, 3);
        let s = split_nodes(&g, 0.2, 0.1, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (20, 10, 70));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let g = ring(90, 3);
        let a = split_nodes(&g, 0.3, 0.1, 11).unwrap();
        let b = split_nodes(&g, 0.3, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let c = split_nodes(&g, 0.3, 0.1, 12).unwrap();
        assert_ne!(a, c);
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 90);
    }

    #[test]
    fn per_class_proportions_within_one() {
        // uneven classes: 50 / 30 / 20
        let n = 100;
        let labels: Vec<Option<usize>> = (0..n)
            .map(|i| Some(if i < 50 { 0 } else if i < 80 { 1 } else { 2 }))
            .collect();
        let edges = (0..n).map(|i| Edge { src: i, dst: (i + 1) % n, etype: 0 }).collect();
        let g = HetPairGraph::new(vec![0; n], vec!["t".into()], edges, vec!["e".into()], Matrix::zeros(1, n), Some(labels))
            .unwrap();
        for ratio in [0.1, 0.3, 0.5, 0.7] {
            let s = split_nodes(&g, ratio, 0.1, 3).unwrap();
            for c in 0..3 {
                let class_size = (0..n).filter(|&v| g.label(v) == Some(c)).count() as f64;
                let count = |set: &[usize]| set.iter().filter(|&&v| g.label(v) == Some(c)).count() as f64;
                assert!((count(&s.train) - ratio * class_size).abs() <= 1.0);
                assert!((count(&s.val) - 0.1 * class_size).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn isolated_nodes_never_train() {
        // nodes 0..10 on a ring, 10..20 isolated
        let n = 20;
        let edges = (0..10).map(|i| Edge { src: i, dst: (i + 1) % 10, etype: 0 }).collect();
        let g = HetPairGraph::new(
            vec![0; n],
            vec!["t".into()],
            edges,
            vec!["e".into()],
            Matrix::zeros(1, n),
            Some((0..n).map(|i| Some(i % 2)).collect()),
        )
        .unwrap();
        for seed in 0..20 {
            let s = split_nodes(&g, 0.4, 0.1, seed).unwrap();
            assert!(s.train.iter().all(|&v| v < 10));
        }
    }

    #[test]
    fn tiny_class_is_an_error() {
        let n = 10;
        let labels = (0..n).map(|i| Some(usize::from(i == 0))).collect();
        let edges = (0..n).map(|i| Edge { src: i, dst: (i + 1) % n, etype: 0 }).collect();
        let g = HetPairGraph::new(vec![0; n], vec!["t".into()], edges, vec!["e".into()], Matrix::zeros(1, n), Some(labels))
            .unwrap();
        // class 1 has one node but three splits to fill
        assert!(matches!(split_nodes(&g, 0.5, 0.4, 0), Err(Error::Split(_))));
        assert!(matches!(split_nodes(&g, 0.5, 0.1, 0), Err(Error::Split(_))));
    }

    #[test]
    fn stable_under_edge_reordering() {
        let g = ring(60, 3);
        let mut edges = g.edges().to_vec();
        edges.reverse();
        let h = g.with_edges(edges).unwrap();
        assert_eq!(split_nodes(&g, 0.2, 0.1, 5).unwrap(), split_nodes(&h, 0.2, 0.1, 5).unwrap());
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(20, &[34, 33, 33]), vec![7, 7, 6]);
        assert_eq!(apportion(0, &[3, 3]), vec![0, 0]);
        assert_eq!(apportion(5, &[5]), vec![5]);
    }
}
