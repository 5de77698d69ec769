use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::hetgraph::{Edge, HetPairGraph};
use crate::numcore::{stream_rng, Matrix};

/// Planted-class generator settings.
///
/// The primary type `P` carries the labels. Each auxiliary type holds
/// `aux_per_class` nodes per class; a primary node links to an auxiliary node
/// with probability `p_intra` when their classes agree and `p_inter`
/// otherwise. With a single node type primary nodes link among themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub node_types: usize,
    pub aux_per_class: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    pub noise: f64,
    /// Norm of every class mean.
    pub mean_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            nodes_per_class: 100,
            node_types: 3,
            aux_per_class: 40,
            p_intra: 0.05,
            p_inter: 0.005,
            feature_dim: 32,
            noise: 0.5,
            mean_scale: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return bad(format!("synth.classes must be at least 2, got {}", self.num_classes));
        }
        if self.nodes_per_class == 0 || self.feature_dim == 0 || self.node_types == 0 {
            return bad("synth.nodes_per_class, synth.dim and synth.node_types must be positive".into());
        }
        if self.node_types > 1 && self.aux_per_class == 0 {
            return bad("synth.aux_per_class must be positive with auxiliary node types".into());
        }
        for (k, p) in [("synth.p_intra", self.p_intra), ("synth.p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{k} must lie in [0, 1], got {p}"));
            }
        }
        if self.p_intra <= self.p_inter {
            return bad(format!(
                "synth.p_intra ({}) must exceed synth.p_inter ({})",
                self.p_intra, self.p_inter
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("synth.noise must be a finite non-negative number, got {}", self.noise));
        }
        if !(self.mean_scale > 0.0 && self.mean_scale.is_finite()) {
            return bad(format!("synth.mean_scale must be positive, got {}", self.mean_scale));
        }
        Ok(())
    }

    /// Denser within-class linking and cleaner features; the link-prediction
    /// benchmark graph.
    pub fn strong_communities(seed: u64) -> Self {
        Self {
            p_intra: 0.3,
            noise: 0.25,
            seed,
            ..Self::default()
        }
    }

    pub fn num_primary(&self) -> usize {
        self.num_classes * self.nodes_per_class
    }

    fn aux_count(&self) -> usize {
        self.num_classes * self.aux_per_class
    }
}

/// Expected number of undirected primary–auxiliary (or primary–primary)
/// pairs that receive an edge.
pub fn expected_undirected_edges(cfg: &SynthConfig) -> f64 {
    let c = cfg.num_classes as f64;
    let np = cfg.num_primary() as f64;
    if cfg.node_types == 1 {
        let same = c * (cfg.nodes_per_class as f64) * (cfg.nodes_per_class as f64 - 1.0) / 2.0;
        let all = np * (np - 1.0) / 2.0;
        return same * cfg.p_intra + (all - same) * cfg.p_inter;
    }
    let na = cfg.aux_count() as f64;
    let same = np * cfg.aux_per_class as f64;
    let per_type = same * cfg.p_intra + (np * na - same) * cfg.p_inter;
    per_type * (cfg.node_types - 1) as f64
}

/// Builds the graph. Node ids: primary nodes first (class-major), then each
/// auxiliary type in turn. Every undirected link is stored in both
/// directions with one edge type per direction.
pub fn generate(cfg: &SynthConfig) -> Result<HetPairGraph> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, "synth");
    let d = cfg.feature_dim;
    let means: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x * cfg.mean_scale / norm).collect()
        })
        .collect();

    let np = cfg.num_primary();
    let aux_types = cfg.node_types - 1;
    let n = np + aux_types * cfg.aux_count();
    let mut node_type = Vec::with_capacity(n);
    let mut class_of = Vec::with_capacity(n);
    for c in 0..cfg.num_classes {
        for _ in 0..cfg.nodes_per_class {
            node_type.push(0);
            class_of.push(c);
        }
    }
    for t in 0..aux_types {
        for c in 0..cfg.num_classes {
            for _ in 0..cfg.aux_per_class {
                node_type.push(t + 1);
                class_of.push(c);
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(format!("synth.noise: {e}")))?;
    let mut feats = Matrix::zeros(d, n);
    for v in 0..n {
        for (r, &mu) in means[class_of[v]].iter().enumerate() {
            let eps = if cfg.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            feats.set(r, v, mu + eps);
        }
    }

    let mut edges = Vec::new();
    let (node_type_names, edge_type_names) = if aux_types == 0 {
        for i in 0..np {
            for j in i + 1..np {
                let p = if class_of[i] == class_of[j] { cfg.p_intra } else { cfg.p_inter };
                if rng.random_bool(p) {
                    edges.push(Edge { src: i, dst: j, etype: 0 });
                    edges.push(Edge { src: j, dst: i, etype: 0 });
                }
            }
        }
        (vec!["P".to_string()], vec!["P-P".to_string()])
    } else {
        let mut node_names = vec!["P".to_string()];
        let mut edge_names = Vec::new();
        for t in 0..aux_types {
            let name = aux_name(t);
            edge_names.push(format!("P-{name}"));
            edge_names.push(format!("{name}-P"));
            node_names.push(name);
            let start = np + t * cfg.aux_count();
            for i in 0..np {
                for a in start..start + cfg.aux_count() {
                    let p = if class_of[i] == class_of[a] { cfg.p_intra } else { cfg.p_inter };
                    if rng.random_bool(p) {
                        edges.push(Edge { src: i, dst: a, etype: 2 * t });
                        edges.push(Edge { src: a, dst: i, etype: 2 * t + 1 });
                    }
                }
            }
        }
        (node_names, edge_names)
    };

    let labels = (0..n).map(|v| (v < np).then_some(class_of[v])).collect();
    HetPairGraph::new(node_type, node_type_names, edges, edge_type_names, feats, Some(labels))
}

fn aux_name(t: usize) -> String {
    match t {
        0 => "A".into(),
        1 => "S".into(),
        k => format!("X{k}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let g = generate(&SynthConfig::default()).unwrap();
        assert_eq!(g.num_nodes(), 300 + 2 * 120);
        assert_eq!(g.num_node_types(), 3);
        assert_eq!(g.num_edge_types(), 4);
        assert_eq!(g.num_classes(), 3);
        assert_eq!(g.feature_dim(), 32);
        assert_eq!((0..g.num_nodes()).filter(|&v| g.is_labeled() && g.label(v).is_some()).count(), 300);
    }

    #[test]
    fn same_seed_same_graph() {
        let cfg = SynthConfig { seed: 4, ..SynthConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 5, ..cfg };
        assert_ne!(generate(&other).unwrap().edges(), generate(&SynthConfig { seed: 4, ..SynthConfig::default() }).unwrap().edges());
    }

    #[test]
    fn edge_count_near_expectation() {
        for seed in 0..5 {
            let cfg = SynthConfig { seed, ..SynthConfig::default() };
            let g = generate(&cfg).unwrap();
            let expected = expected_undirected_edges(&cfg);
            // 300·120·(0.05/3 + 0.005·2/3) = 720 per auxiliary type
            assert!((expected - 1440.0).abs() < 1e-9);
            let got = g.num_edges() as f64 / 2.0;
            assert!((got - expected).abs() <= 0.1 * expected, "seed {seed}: {got} vs {expected}");
        }
    }

    #[test]
    fn noiseless_classes_separate_by_features() {
        let cfg = SynthConfig {
            noise: 0.0,
            p_inter: 0.0,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        let f = g.features();
        // every primary node sits exactly on its class mean, so nearest-mean
        // classification is exact
        let first: Vec<Vec<f64>> = (0..3).map(|c| f.column(c * 100)).collect();
        for v in 0..300 {
            let col = f.column(v);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = col.iter().zip(&first[a]).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = col.iter().zip(&first[b]).map(|(x, y)| (x - y).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(Some(best), g.label(v));
        }
        // with p_inter = 0 every edge joins nodes of one class
        let class = |v: usize| if v < 300 { v / 100 } else { ((v - 300) % 120) / 40 };
        assert!(g.edges().iter().all(|e| class(e.src) == class(e.dst)));
    }

    #[test]
    fn single_type_variant() {
        let cfg = SynthConfig {
            node_types: 1,
            nodes_per_class: 20,
            p_intra: 0.3,
            p_inter: 0.01,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        assert_eq!(g.num_nodes(), 60);
        assert_eq!(g.num_edge_types(), 1);
        let got = g.num_edges() as f64 / 2.0;
        let expected = expected_undirected_edges(&cfg);
        assert!((got - expected).abs() < 0.25 * expected, "{got} vs {expected}");
    }

    #[test]
    fn rejects_bad_config() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = SynthConfig::default();
            f(&mut c);
            generate(&c).is_err()
        };
        assert!(bad(|c| c.p_intra = 1.5));
        assert!(bad(|c| c.p_inter = 0.06));
        assert!(bad(|c| c.num_classes = 1));
        assert!(bad(|c| c.noise = -1.0));
    }

    #[test]
    fn many_seeds_validate() {
        for seed in 0..20 {
            let cfg = SynthConfig {
                seed,
                nodes_per_class: 15,
                aux_per_class: 5,
                ..SynthConfig::default()
            };
            generate(&cfg).unwrap().validate().unwrap();
        }
    }
}
