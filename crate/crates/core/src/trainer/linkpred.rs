use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hetgraph::{hide_edges, HetPairGraph, LinkSplit};
use crate::numcore::{adam_step, stream_rng, AdamState, Matrix, ParamStore, Real, Tape};
use crate::trainer::metrics::{accuracy, binary_f1};
use crate::trainer::model::argmax_columns;
use crate::trainer::train::{train, train_unsupervised, TrainOutcome};
use crate::trainer::{LinkConfig, LinkObjective, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkReport {
    pub f1: f64,
    pub accuracy: f64,
    /// Hidden pairs (positives) and sampled non-edges (negatives).
    pub positives: usize,
    pub negatives: usize,
    /// Pairs the hiding fraction asked for.
    pub requested: usize,
    pub eval_pairs: usize,
    pub warning: Option<String>,
}

/// Column `p` is the elementwise product of the embeddings of pair `p`.
pub fn hadamard_features<T: Real>(z: &Matrix<T>, pairs: &[(usize, usize)]) -> Matrix<f64> {
    let mut out = Matrix::zeros(z.rows(), pairs.len());
    for r in 0..z.rows() {
        let row = z.row(r);
        for (p, &(a, b)) in pairs.iter().enumerate() {
            out.set(r, p, (row[a] * row[b]).to_f64().unwrap_or(f64::NAN));
        }
    }
    out
}

/// Standardizes rows with statistics of the `fit` columns; constant rows
/// become zero.
fn standardize(features: &mut Matrix<f64>, fit: &[usize]) {
    let n = fit.len() as f64;
    for r in 0..features.rows() {
        let row = features.row_mut(r);
        let mean = fit.iter().map(|&j| row[j]).sum::<f64>() / n;
        let var = fit.iter().map(|&j| (row[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for x in row.iter_mut() {
            *x = if sd > 1e-12 { (*x - mean) / sd } else { 0.0 };
        }
    }
}

/// Fits a logistic classifier on Hadamard edge features of a seeded share
/// of the labelled pairs and scores it on the rest.
pub fn link_predict<T: Real>(z: &Matrix<T>, split: &LinkSplit, cfg: &LinkConfig, seed: u64) -> Result<LinkReport> {
    cfg.validate()?;
    let pairs: Vec<(usize, usize)> = split
        .positive_pairs
        .iter()
        .chain(&split.negative_pairs)
        .copied()
        .collect();
    let labels: Vec<usize> = std::iter::repeat_n(1, split.positive_pairs.len())
        .chain(std::iter::repeat_n(0, split.negative_pairs.len()))
        .collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut stream_rng(seed, "link-fit"));
    let n_fit = (cfg.fit_fraction * pairs.len() as f64).round() as usize;
    let (fit, held) = order.split_at(n_fit);
    let has_both = |idx: &[usize]| idx.iter().any(|&i| labels[i] == 1) && idx.iter().any(|&i| labels[i] == 0);
    if !has_both(fit) || held.is_empty() {
        return Err(Error::LinkPrediction(format!(
            "need both classes among the fitted pairs and a non-empty evaluation set ({} positives, {} negatives)",
            split.positive_pairs.len(),
            split.negative_pairs.len()
        )));
    }

    let mut feats = hadamard_features(z, &pairs);
    standardize(&mut feats, fit);
    let fit_x = feats.select_columns(fit);
    let fit_y: Arc<Vec<usize>> = Arc::new(fit.iter().map(|&i| labels[i]).collect());

    let mut store = ParamStore::<f64>::new();
    let w = store.add("link.w", Matrix::zeros(2, feats.rows()));
    let b = store.add("link.b", Matrix::zeros(2, 1));
    let mut adam = AdamState::new(store.values());
    for _ in 0..cfg.classifier_steps {
        let mut tape = Tape::new();
        let x = tape.constant(fit_x.clone());
        let wv = store.bind(&mut tape, w);
        let bv = store.bind(&mut tape, b);
        let s = tape.matmul(wv, x)?;
        let s = tape.add_column(s, bv)?;
        let loss = tape.cross_entropy(s, fit_y.clone());
        let mut grads = tape.backward(loss);
        let g = store.collect_gradients(&tape, &mut grads);
        adam_step(store.values_mut(), &g, &mut adam, cfg.classifier_lr);
    }

    let held_x = feats.select_columns(held);
    let mut scores = store.get(w).matmul(&held_x)?;
    for r in 0..2 {
        let bias = store.get(b).get(r, 0);
        scores.row_mut(r).iter_mut().for_each(|v| *v += bias);
    }
    let pred: Vec<bool> = argmax_columns(&scores).into_iter().map(|c| c == 1).collect();
    let truth: Vec<bool> = held.iter().map(|&i| labels[i] == 1).collect();
    Ok(LinkReport {
        f1: binary_f1(&truth, &pred),
        accuracy: accuracy(&truth, &pred),
        positives: split.positive_pairs.len(),
        negatives: split.negative_pairs.len(),
        requested: split.requested,
        eval_pairs: held.len(),
        warning: split.warning.clone(),
    })
}

/// Hides edges, trains on the residual graph and evaluates edge recovery.
pub fn run_link_prediction<T: Real>(
    graph: &HetPairGraph,
    train_cfg: &TrainConfig,
    link_cfg: &LinkConfig,
) -> Result<(LinkReport, TrainOutcome<T>)> {
    link_cfg.validate()?;
    let split = hide_edges(graph, link_cfg.fraction, train_cfg.seed)?;
    if split.positive_pairs.is_empty() {
        return Err(Error::LinkPrediction(
            split.warning.clone().unwrap_or_else(|| "no edges could be hidden".into()),
        ));
    }
    let residual = split.residual_graph(graph)?;
    let outcome = match link_cfg.objective {
        LinkObjective::Auto => train::<T>(&residual, train_cfg)?,
        LinkObjective::Reconstruction => {
            let cfg = TrainConfig {
                alpha: 1.0,
                ..train_cfg.clone()
            };
            train_unsupervised::<T>(&residual, &cfg)?
        }
    };
    let z = outcome.model.embeddings()?;
    let report = link_predict(&z, &split, link_cfg, train_cfg.seed)?;
    Ok((report, outcome))
}
