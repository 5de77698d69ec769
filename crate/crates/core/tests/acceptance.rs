use std::time::{Duration, Instant};

use rand::Rng;

use hyperlfh::hetgraph::{hide_edges, Edge, HetPairGraph};
use hyperlfh::hyperattn::{AttentionLayer, HyperStructure};
use hyperlfh::hypergen::{enumerate_candidate_sets, HyperedgeBank, HypergenConfig};
use hyperlfh::numcore::{adam_step, stream_rng, AdamState, Matrix, ParamStore, Tape};
use hyperlfh::synthdata::{four_node_fixture, generate, oracle_forward, oracle_nnls, OracleInstance, SynthConfig};
use hyperlfh::trainer::{
    gradcheck, gradcheck_instance, mean_by_value, metrics_csv, run_link_prediction, sweep, train, LinkConfig,
    Model, SweepParam, TrainConfig, GRADCHECK_TOLERANCE,
};

/// Reference scores from the seeded runs; other CPUs may round differently,
/// so they are compared with a small slack while the thresholds stay hard.
const PINNED_VAL_F1: f64 = 1.0;
const PINNED_LINK_F1: f64 = 0.902;
const PIN_SLACK: f64 = 0.03;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(name: &str, budget: Duration, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = check();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    println!(
        "{name}: {} ({}; {:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn gradient_fidelity() -> Outcome {
    let (graph, cfg) = gradcheck_instance(0).unwrap();
    let report = gradcheck(&graph, &cfg).unwrap();
    Outcome {
        pass: graph.num_nodes() == 6 && report.max_rel_error < GRADCHECK_TOLERANCE,
        detail: format!(
            "max rel error {:.3e} over {} entries",
            report.max_rel_error, report.entries_checked
        ),
    }
}

/// Copies the fixture's parameters into a layer and runs the model's forward.
fn model_attention(inst: &OracleInstance) -> Vec<Vec<f64>> {
    let (d, heads) = (inst.dim, inst.heads);
    let types = inst.q_proj.len();
    let etypes = inst.k_proj.len();
    let mut store = ParamStore::<f64>::new();
    let layer = AttentionLayer::init(&mut store, "a", d, heads, types, etypes, &mut stream_rng(0, "fixture")).unwrap();
    let stack = |per_head: &Vec<Vec<Vec<f64>>>| {
        let rows: Vec<Vec<f64>> = per_head.iter().flatten().cloned().collect();
        Matrix::from_rows(&rows)
    };
    for t in 0..types {
        *store.get_mut(layer.q_proj[t]) = stack(&inst.q_proj[t]);
    }
    for t in 0..etypes {
        *store.get_mut(layer.k_proj[t]) = stack(&inst.k_proj[t]);
        *store.get_mut(layer.theta[t]) = Matrix::from_rows(&inst.theta[t]);
        *store.get_mut(layer.mu[t]) = Matrix::scalar(inst.mu[t]);
    }
    let column = |v: &[f64]| Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap();
    *store.get_mut(layer.w_hidden) = Matrix::from_rows(&inst.w_hidden);
    *store.get_mut(layer.b_hidden) = column(&inst.b_hidden);
    *store.get_mut(layer.w_out) = Matrix::from_rows(&inst.w_out);
    *store.get_mut(layer.b_out) = column(&inst.b_out);

    let x = Matrix::from_rows(&inst.x).transpose();
    let h = Matrix::from_rows(&inst.h);
    let structure = HyperStructure::new(&inst.node_type, types, &inst.edge_master, &inst.edge_type, etypes).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let hv = tape.constant(h);
    let dv = tape.column_sums(hv);
    let out = layer.forward(&mut tape, &store, xv, hv, dv, &structure).unwrap();
    let z = tape.value(out.z);
    (0..z.cols()).map(|c| z.column(c)).collect()
}

/// Degenerate reconstruction: no penalties and identity projections, so each
/// set solves a non-negative least-norm fit that the oracle enumerates.
fn degenerate_reconstruction_gap() -> f64 {
    let dim = 5;
    let n = 4;
    let mut rng = stream_rng(11, "nnls");
    let feats = Matrix::from_vec(dim, n, (0..dim * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let graph = HetPairGraph::new(
        vec![0; n],
        vec!["t".into()],
        vec![Edge { src: 0, dst: 1, etype: 0 }],
        vec!["e".into()],
        feats.clone(),
        None,
    )
    .unwrap();
    let cfg = HypergenConfig {
        lambda: 1e3,
        gamma: 0.0,
        l1: 0.0,
        ..HypergenConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let sets = enumerate_candidate_sets(&graph);
    let bank = HyperedgeBank::init(&mut store, &graph, sets, dim, cfg.threshold, &mut stream_rng(11, "bank")).unwrap();
    *store.get_mut(bank.theta[0].unwrap()) = Matrix::identity(dim);
    let p_index = store.ids().position(|id| id == bank.p).unwrap();

    let mut adam = AdamState::new(std::slice::from_ref(store.get(bank.p)));
    let mut errors = Vec::new();
    for step in 0..4000 {
        let mut tape = Tape::new();
        let xv = tape.constant(feats.clone());
        let out = bank.forward(&mut tape, &store, xv, &cfg).unwrap();
        errors = tape.value(out.errors).as_slice().to_vec();
        let mut grads = tape.backward(out.recon_loss);
        let g = store.collect_gradients(&tape, &mut grads);
        let lr = if step < 3000 { 1e-2 } else { 1e-3 };
        adam_step(std::slice::from_mut(store.get_mut(bank.p)), &g[p_index..=p_index], &mut adam, lr);
    }

    let mut worst: f64 = 0.0;
    for (s, set) in bank.sets().iter().enumerate() {
        let cands: Vec<Vec<f64>> = set.members.iter().map(|&m| feats.column(m)).collect();
        let opt = oracle_nnls(&cands, &feats.column(set.master)).unwrap().residual;
        worst = worst.max((errors[s] - opt) / opt);
    }
    worst
}

fn oracle_equivalence() -> Outcome {
    let inst = four_node_fixture();
    let expect = oracle_forward(&inst).unwrap();
    let got = model_attention(&inst);
    let mut diff: f64 = 0.0;
    for (a, b) in got.iter().zip(&expect) {
        for (x, y) in a.iter().zip(b) {
            diff = diff.max((x - y).abs());
        }
    }
    let gap = degenerate_reconstruction_gap();
    Outcome {
        pass: got.len() == expect.len() && diff < 1e-10 && gap <= 0.05,
        detail: format!("attention max abs diff {diff:.2e}; reconstruction {:.3}% above optimum", gap * 100.0),
    }
}

fn structural_invariants() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut violations = Vec::new();
    let mut checked = 0;
    for seed in 0..50u64 {
        let graph = generate(&SynthConfig {
            nodes_per_class: 6,
            aux_per_class: 3,
            feature_dim: 6,
            p_intra: 0.4,
            p_inter: 0.05,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            dim: 8,
            heads: 2,
            seed,
            ..TrainConfig::default()
        };
        let mut model = Model::<f64>::new(&graph, &cfg, true).unwrap();
        // spread coefficients over negative, tiny and large values
        let mut rng = stream_rng(seed, "invariants");
        for c in model.store.get_mut(model.bank.p).as_mut_slice() {
            *c = match rng.random_range(0..4) {
                0 => -rng.random_range(0.0..1.0),
                1 => rng.random_range(0.0..2e-6),
                2 => rng.random_range(0.0..1.0),
                _ => rng.random_range(1.0..3.0),
            };
        }
        let f = model.evaluate().unwrap();
        let h = f.tape.value(f.hyper.h);
        let delta = f.tape.value(f.hyper.edge_degree);
        for (e, &master) in model.bank.edge_masters().iter().enumerate() {
            if h.get(master, e) != 1.0 {
                violations.push(format!("seed {seed}: master entry of hyperedge {e}"));
            }
            if delta.get(0, e) < 1.0 {
                violations.push(format!("seed {seed}: degree of hyperedge {e}"));
            }
        }
        if h.as_slice().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            violations.push(format!("seed {seed}: incidence entry outside [0, 1]"));
        }
        for round in &f.rounds {
            let w = f.tape.value(round.weights);
            for group in model.structure().groups() {
                for head in 0..w.rows() {
                    let s: f64 = group.iter().map(|&p| w.get(head, p)).sum();
                    worst_sum = worst_sum.max((s - 1.0).abs());
                }
            }
        }
        checked += h.cols();
    }
    Outcome {
        pass: violations.is_empty() && worst_sum < 1e-9,
        detail: format!(
            "{checked} hyperedges, {} violations, max weight-sum error {worst_sum:.1e}",
            violations.len()
        ),
    }
}

fn learning_signal() -> Outcome {
    let graph = generate(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig::default();
    let out = train::<f64>(&graph, &cfg).unwrap();
    let f1 = out.best_val_f1;
    Outcome {
        pass: cfg.max_epochs <= 100 && f1 >= 0.90 && (f1 - PINNED_VAL_F1).abs() <= PIN_SLACK,
        detail: format!(
            "best val macro-F1 {f1:.4} at epoch {} (pinned {PINNED_VAL_F1}), test {:.4}",
            out.best_epoch,
            out.test_f1.unwrap_or(f64::NAN)
        ),
    }
}

fn sensitivity() -> Outcome {
    let graph = generate(&SynthConfig::default()).unwrap();
    let base = TrainConfig::default();
    let seeds = [0, 1, 2];
    let means = |param: SweepParam, values: &[f64]| -> Vec<f64> {
        let rows = sweep::<f64>(&graph, &base, param, values, &seeds).unwrap();
        mean_by_value(&rows).into_iter().map(|(_, f)| f).collect()
    };
    let margin = 0.02;
    let lambda = means(SweepParam::Lambda, &[0.2, 20.0]);
    let gamma = means(SweepParam::Gamma, &[0.002, 0.2, 20.0]);
    let alpha = means(SweepParam::Alpha, &[0.1, 0.5]);
    let checks = [
        ("lambda 0.2 > 20", lambda[0] - lambda[1]),
        ("gamma 0.2 >= 0.002", gamma[1] - gamma[0]),
        ("gamma 0.2 >= 20", gamma[1] - gamma[2]),
        ("alpha 0.1 >= 0.5", alpha[0] - alpha[1]),
    ];
    let detail = checks
        .iter()
        .map(|(name, m)| format!("{name} by {m:+.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass: checks.iter().all(|&(_, m)| m >= margin),
        detail: format!("mean test macro-F1 over seeds 0..3, margin {margin}: {detail}"),
    }
}

/// Component labels by a plain breadth-first search.
fn components(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = s;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = s;
                    stack.push(u);
                }
            }
        }
    }
    comp
}

fn link_prediction() -> Outcome {
    let mut broken = 0;
    for seed in 0..100u64 {
        let graph = generate(&SynthConfig {
            nodes_per_class: 5 + (seed % 7) as usize,
            aux_per_class: 2 + (seed % 3) as usize,
            feature_dim: 4,
            p_intra: 0.2 + 0.05 * (seed % 5) as f64,
            p_inter: 0.02,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let split = hide_edges(&graph, 0.1 + 0.08 * (seed % 10) as f64, seed).unwrap();
        let n = graph.num_nodes();
        let before = components(n, graph.edges().iter().map(|e| (e.src, e.dst)));
        let after = components(n, split.residual_edges.iter().map(|e| (e.src, e.dst)));
        if before != after {
            broken += 1;
        }
    }

    let graph = generate(&SynthConfig::strong_communities(0)).unwrap();
    let (report, _) = run_link_prediction::<f64>(&graph, &TrainConfig::default(), &LinkConfig::default()).unwrap();
    let f1 = report.f1;
    Outcome {
        pass: broken == 0 && f1 >= 0.8 && (f1 - PINNED_LINK_F1).abs() <= PIN_SLACK,
        detail: format!(
            "{broken}/100 splits changed connectivity; link F1 {f1:.4} (pinned {PINNED_LINK_F1}) on {} held-out pairs",
            report.eval_pairs
        ),
    }
}

fn determinism() -> Outcome {
    let graph = generate(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig {
        max_epochs: 15,
        patience: 15,
        ..TrainConfig::default()
    };
    let a = metrics_csv(&train::<f64>(&graph, &cfg).unwrap().history);
    let b = metrics_csv(&train::<f64>(&graph, &cfg).unwrap().history);
    Outcome {
        pass: a.as_bytes() == b.as_bytes(),
        detail: format!("{} csv lines compared byte for byte", a.lines().count()),
    }
}

#[test]
fn acceptance() {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let results = [
        run("criterion 1 gradient fidelity", Duration::from_secs(60), gradient_fidelity),
        run("criterion 2 oracle equivalence", mins(2), oracle_equivalence),
        run("criterion 3 structural invariants", Duration::from_secs(120), structural_invariants),
        run("criterion 4 learning signal", mins(5), learning_signal),
        run("criterion 5 sensitivity shapes", mins(30), sensitivity),
        run("criterion 6 link prediction", mins(5), link_prediction),
        run("criterion 7 determinism", mins(5), determinism),
    ];
    let failed: Vec<usize> = (1..=results.len()).filter(|&i| !results[i - 1]).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
