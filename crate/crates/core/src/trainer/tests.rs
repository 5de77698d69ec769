use super::*;
use crate::hetgraph::{fixtures, hide_edges, HetPairGraph};
use crate::numcore::{Matrix, Tape};
use crate::synthdata::{generate, SynthConfig};

fn small_synth(seed: u64) -> HetPairGraph {
    generate(&SynthConfig {
        nodes_per_class: 12,
        aux_per_class: 4,
        feature_dim: 8,
        p_intra: 0.3,
        p_inter: 0.02,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        dim: 8,
        heads: 2,
        max_epochs: epochs,
        patience: epochs.min(3),
        train_ratio: 0.4,
        val_ratio: 0.3,
        ..TrainConfig::default()
    }
}

#[test]
fn united_loss_endpoints_and_linearity() {
    let (label, recon) = (1.25, 7.5);
    let at = |alpha: f64| {
        let mut tape = Tape::<f64>::new();
        let l = tape.constant(Matrix::scalar(label));
        let r = tape.constant(Matrix::scalar(recon));
        let u = united_loss(&mut tape, l, r, alpha).unwrap();
        let v = tape.value(u).item();
        assert_eq!(v, united_loss_value(label, recon, alpha));
        v
    };
    assert_eq!(at(0.0), label);
    assert_eq!(at(1.0), recon);
    // three-point collinearity
    let (a, b, c) = (at(0.1), at(0.4), at(0.7));
    assert!(((b - a) - (c - b)).abs() < 1e-12);
    let mut tape = Tape::<f64>::new();
    let l = tape.constant(Matrix::scalar(1.0));
    assert!(united_loss(&mut tape, l, l, 1.5).is_err());
}

#[test]
fn label_loss_uniform_is_ln_classes() {
    let g = generate(&SynthConfig {
        nodes_per_class: 2,
        aux_per_class: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut tape = Tape::<f64>::new();
    let logits = tape.constant(Matrix::zeros(3, g.num_nodes()));
    let loss = label_loss(&mut tape, logits, &g, &[0, 2, 4]).unwrap();
    assert!((tape.value(loss).item() - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn label_loss_two_class_by_hand() {
    // path fixture labels alternate 0, 1, 0
    let g = fixtures::path(3);
    let mut tape = Tape::<f64>::new();
    let logits = tape.constant(Matrix::from_rows(&[[2.0, 0.5, 9.0], [0.0, -0.5, 9.0]]));
    let loss = label_loss(&mut tape, logits, &g, &[0, 1]).unwrap();
    // node 0: -log(e^2 / (e^2 + 1)); node 1: -log(e^-0.5 / (e^0.5 + e^-0.5))
    let n0 = (1.0f64 + (-2.0f64).exp()).ln();
    let n1 = (1.0f64 + 1.0f64.exp()).ln();
    assert!((tape.value(loss).item() - (n0 + n1) / 2.0).abs() < 1e-12);
    assert!(label_loss(&mut tape, logits, &g, &[]).is_err());
}

#[test]
fn training_is_bit_reproducible() {
    let g = small_synth(1);
    let cfg = small_config(4);
    let a = train::<f64>(&g, &cfg).unwrap();
    let b = train::<f64>(&g, &cfg).unwrap();
    assert_eq!(metrics_csv(&a.history), metrics_csv(&b.history));
    assert_eq!(a.model.store.values(), b.model.store.values());
    let c = train::<f64>(&g, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(metrics_csv(&a.history), metrics_csv(&c.history));
}

#[test]
fn early_stopping_restores_best() {
    let g = small_synth(2);
    let out = train::<f64>(&g, &small_config(12)).unwrap();
    let best = out.history.iter().map(|r| r.val_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_val_f1, best);
    assert_eq!(out.history[out.best_epoch - 1].val_f1, best);
    let split = out.split.as_ref().unwrap();
    assert_eq!(eval_f1(&out.model, &g, &split.val).unwrap(), best);
    let last = out.history.len();
    assert!(last == 12 || last - out.best_epoch >= 3);
    assert!(out.test_f1.is_some_and(|f| (0.0..=1.0).contains(&f)));
}

#[test]
fn alpha_one_leaves_the_label_head_untouched() {
    let g = small_synth(3);
    let cfg = TrainConfig {
        alpha: 1.0,
        ..small_config(6)
    };
    let init = Model::<f64>::new(&g, &cfg, true).unwrap();
    let out = train::<f64>(&g, &cfg).unwrap();
    let head = init.classifier.as_ref().unwrap();
    for id in [head.w_hidden, head.b_hidden, head.w_out, head.b_out] {
        assert_eq!(out.model.store.get(id), init.store.get(id));
    }
    let h = &out.history;
    assert!(h.last().unwrap().train_loss < h[0].train_loss);
}

#[test]
fn non_finite_forward_reports_divergence() {
    let g = small_synth(4);
    let huge = g.features().map(|x| x * 1e200);
    let g = HetPairGraph::new(
        g.node_types().to_vec(),
        g.node_type_names().to_vec(),
        g.edges().to_vec(),
        g.edge_type_names().to_vec(),
        huge,
        g.labels().map(<[_]>::to_vec),
    )
    .unwrap();
    match train::<f64>(&g, &small_config(3)) {
        Err(crate::Error::Divergence { epoch, tensor }) => {
            assert_eq!(epoch, 1);
            assert!(!tensor.is_empty());
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn unlabelled_graph_trains_on_reconstruction() {
    let g = small_synth(5);
    let g = HetPairGraph::new(
        g.node_types().to_vec(),
        g.node_type_names().to_vec(),
        g.edges().to_vec(),
        g.edge_type_names().to_vec(),
        g.features().clone(),
        None,
    )
    .unwrap();
    let out = train::<f64>(&g, &small_config(5)).unwrap();
    assert_eq!(out.history.len(), 5);
    assert!(out.history.iter().all(|r| r.val_f1 == 0.0));
    assert!(out.model.classifier.is_none() && out.test_f1.is_none());
}

#[test]
fn hadamard_with_ones_is_identity() {
    let z = Matrix::<f64>::from_rows(&[[0.5, 1.0, 3.0], [-2.0, 1.0, 4.0]]);
    let f = hadamard_features(&z, &[(0, 1), (1, 2)]);
    assert_eq!(f.column(0), vec![0.5, -2.0]);
    assert_eq!(f.column(1), vec![3.0, 4.0]);
}

#[test]
fn constant_embeddings_predict_links_at_chance() {
    let g = generate(&SynthConfig::default()).unwrap();
    let split = hide_edges(&g, 0.5, 0).unwrap();
    let z = Matrix::<f64>::filled(16, g.num_nodes(), 0.7);
    let mut accs = Vec::new();
    for seed in 0..5 {
        let r = link_predict(&z, &split, &LinkConfig::default(), seed).unwrap();
        assert_eq!(r.positives, r.negatives);
        accs.push(r.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "{accs:?}");
}

#[test]
fn link_prediction_needs_both_classes() {
    let g = fixtures::path(6);
    let mut split = hide_edges(&g, 0.5, 0).unwrap();
    split.negative_pairs.clear();
    let z = Matrix::<f64>::filled(2, 6, 1.0);
    assert!(matches!(
        link_predict(&z, &split, &LinkConfig::default(), 0),
        Err(crate::Error::LinkPrediction(_))
    ));
}

#[test]
fn sweep_parameters_and_csv() {
    let base = TrainConfig::default();
    assert_eq!(SweepParam::Gamma.apply(&base, 20.0).unwrap().hypergen.gamma, 20.0);
    assert_eq!(SweepParam::Heads.apply(&base, 8.0).unwrap().heads, 8);
    assert!(SweepParam::Dim.apply(&base, 12.5).is_err());
    assert!(SweepParam::Heads.apply(&base, 3.0).is_err());
    let tr = SweepParam::TrainRatio.apply(&base, 0.95).unwrap();
    assert!(tr.train_ratio + tr.val_ratio <= 1.0);
    assert!("delta".parse::<SweepParam>().is_err());
    assert_eq!("train_ratio".parse::<SweepParam>().unwrap(), SweepParam::TrainRatio);

    let g = small_synth(6);
    let rows = sweep::<f64>(&g, &small_config(2), SweepParam::Alpha, &[0.1, 0.5], &[0, 1]).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[1].value, rows[1].seed), (0.1, 1));
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("param,value,f1,seed\nalpha,0.1,"));
    let means = mean_by_value(&rows);
    assert_eq!(means.len(), 2);
    assert!((means[0].1 - (rows[0].f1 + rows[1].f1) / 2.0).abs() < 1e-15);
}

#[test]
fn checkpoint_restores_predictions() {
    let g = small_synth(7);
    let cfg = small_config(3);
    let out = train::<f64>(&g, &cfg).unwrap();
    let text = Checkpoint::from_store(&out.model.store, vec![]).to_text();
    let mut fresh = Model::<f64>::new(&g, &cfg, true).unwrap();
    Checkpoint::parse(&text).unwrap().restore_into(&mut fresh.store).unwrap();
    assert_eq!(fresh.predict().unwrap(), out.model.predict().unwrap());
    assert_eq!(fresh.embeddings().unwrap(), out.model.embeddings().unwrap());
}

#[test]
fn label_subset_must_be_labelled() {
    let g = HetPairGraph::new(
        vec![0, 0],
        vec!["a".into()],
        vec![],
        vec!["a-a".into()],
        Matrix::zeros(1, 2),
        Some(vec![Some(0), None]),
    )
    .unwrap();
    let mut tape = Tape::<f64>::new();
    let logits = tape.constant(Matrix::zeros(2, 2));
    assert!(label_loss(&mut tape, logits, &g, &[1]).is_err());
}
