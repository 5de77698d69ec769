use std::time::Instant;

use crate::error::{Error, Result};
use crate::hetgraph::{split_nodes, HetPairGraph, NodeSplit};
use crate::numcore::{adam_step, stream_rng, AdamState, Matrix, Real, Tape, Var};
use crate::trainer::metrics::{macro_f1, EpochRecord};
use crate::trainer::model::{argmax_columns, label_loss, united_loss, Model};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters restored to the best validation epoch.
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub split: Option<NodeSplit>,
    /// Macro-F1 of the restored model on the test nodes.
    pub test_f1: Option<f64>,
}

/// Trains on `graph`. A labelled graph gets a stratified split, a label
/// head and early stopping on validation macro-F1; an unlabelled graph is
/// trained on the reconstruction loss alone for the full epoch budget.
pub fn train<T: Real>(graph: &HetPairGraph, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if graph.is_labeled() {
        let split = split_nodes(graph, config.train_ratio, config.val_ratio, config.seed)?;
        train_supervised(graph, config, split)
    } else {
        train_unsupervised(graph, config)
    }
}

fn divergence<T: Real>(tape: &Tape<T>, epoch: usize) -> Error {
    let tensor = match tape.first_non_finite() {
        Some(v) => format!("{} #{}", tape.op_name(v), v.index()),
        None => "loss".into(),
    };
    Error::Divergence { epoch, tensor }
}

/// Backward pass plus one Adam step; rejects non-finite gradients.
fn step<T: Real>(
    model: &mut Model<T>,
    tape: &Tape<T>,
    loss: Var,
    adam: &mut AdamState<T>,
    epoch: usize,
) -> Result<()> {
    let mut grads = tape.backward(loss);
    let g = model.store.collect_gradients(tape, &mut grads);
    if let Some((i, _)) = g.iter().enumerate().find(|(_, m)| !m.is_finite()) {
        let name = model.store.name(crate::numcore::ParamId(i)).to_string();
        return Err(Error::Divergence {
            epoch,
            tensor: format!("gradient of {name}"),
        });
    }
    let lr = model.config.lr;
    adam_step(model.store.values_mut(), &g, adam, lr);
    Ok(())
}

fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn train_supervised<T: Real>(
    graph: &HetPairGraph,
    config: &TrainConfig,
    split: NodeSplit,
) -> Result<TrainOutcome<T>> {
    let mut model = Model::<T>::new(graph, config, true)?;
    let mut adam = AdamState::new(model.store.values());
    let mut rng = stream_rng(config.seed, "dropout");
    let alpha = config.alpha;
    let val_truth: Vec<usize> = split.val.iter().map(|&v| graph.label(v).expect("labelled")).collect();

    let mut history = Vec::new();
    let mut best: (f64, usize, Vec<Matrix<T>>) = (f64::NEG_INFINITY, 0, model.store.values().to_vec());
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let f = model.forward(true, &mut rng)?;
        let mut tape = f.tape;
        let logits = f.logits.expect("label head");
        let label = label_loss(&mut tape, logits, graph, &split.train)?;
        let loss = united_loss(&mut tape, label, f.hyper.recon_loss, alpha)?;
        let train_loss = to_f64(tape.value(loss).item());
        if !train_loss.is_finite() {
            return Err(divergence(&tape, epoch));
        }
        step(&mut model, &tape, loss, &mut adam, epoch)?;

        let e = model.evaluate()?;
        let mut etape = e.tape;
        let elogits = e.logits.expect("label head");
        let vlabel = label_loss(&mut etape, elogits, graph, &split.val)?;
        let vloss = united_loss(&mut etape, vlabel, e.hyper.recon_loss, alpha)?;
        let val_loss = to_f64(etape.value(vloss).item());
        if !val_loss.is_finite() {
            return Err(divergence(&etape, epoch));
        }
        let pred = argmax_columns(etape.value(elogits));
        let val_pred: Vec<usize> = split.val.iter().map(|&v| pred[v]).collect();
        let val_f1 = macro_f1(&val_truth, &val_pred);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} f1 {val_f1:.4}");

        if val_f1 > best.0 {
            best = (val_f1, epoch, model.store.values().to_vec());
        } else if epoch - best.1 >= config.patience {
            log::info!("early stop at epoch {epoch}; best epoch {}", best.1);
            break;
        }
    }
    model.store.values_mut().clone_from_slice(&best.2);
    let test_f1 = eval_f1(&model, graph, &split.test)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.1,
        best_val_f1: best.0,
        split: Some(split),
        test_f1: Some(test_f1),
    })
}

/// Reconstruction-only training; the returned model is the final one and
/// the validation columns report the evaluation-mode reconstruction loss.
pub(crate) fn train_unsupervised<T: Real>(graph: &HetPairGraph, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    let mut model = Model::<T>::new(graph, config, false)?;
    let mut adam = AdamState::new(model.store.values());
    let mut rng = stream_rng(config.seed, "dropout");
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let f = model.forward(true, &mut rng)?;
        let loss = f.hyper.recon_loss;
        let train_loss = to_f64(f.tape.value(loss).item());
        if !train_loss.is_finite() {
            return Err(divergence(&f.tape, epoch));
        }
        step(&mut model, &f.tape, loss, &mut adam, epoch)?;
        let e = model.evaluate()?;
        let val_loss = to_f64(e.tape.value(e.hyper.recon_loss).item());
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1: 0.0,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let last = history.len();
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: last,
        best_val_f1: 0.0,
        split: None,
        test_f1: None,
    })
}

/// Macro-F1 of the model's arg-max predictions on `nodes`.
pub fn eval_f1<T: Real>(model: &Model<T>, graph: &HetPairGraph, nodes: &[usize]) -> Result<f64> {
    let pred = model.predict()?;
    let truth = nodes
        .iter()
        .map(|&v| graph.label(v).ok_or_else(|| Error::Config(format!("node {v} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let picked: Vec<usize> = nodes.iter().map(|&v| pred[v]).collect();
    Ok(macro_f1(&truth, &picked))
}
