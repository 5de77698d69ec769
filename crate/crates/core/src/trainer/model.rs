use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fusion::{FusionParams, RelationIndex};
use crate::hetgraph::HetPairGraph;
use crate::hyperattn::{AttentionOutput, HyperAttention, HyperStructure};
use crate::hypergen::{cap_candidate_sets, enumerate_candidate_sets, HyperedgeBank, HypergenConfig, HypergenOutput};
use crate::numcore::{stream_rng, xavier_with, Matrix, ParamId, ParamStore, Real, Tape, Var};
use crate::trainer::TrainConfig;

/// Label head: one hidden relu layer of width `d`, then class logits.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub w_hidden: ParamId,
    pub b_hidden: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

/// All trainable state for one graph, plus the structure derived from it.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub store: ParamStore<T>,
    pub fusion: FusionParams,
    pub bank: HyperedgeBank,
    pub attention: HyperAttention,
    pub classifier: Option<Classifier>,
    pub config: TrainConfig,
    relations: RelationIndex,
    structure: HyperStructure,
    raw: Matrix<T>,
    num_classes: usize,
}

/// Values recorded by one forward pass.
pub struct Forward<T> {
    pub tape: Tape<T>,
    /// `d×N` fused embeddings.
    pub x: Var,
    pub hyper: HypergenOutput,
    pub rounds: Vec<AttentionOutput>,
    /// `d×N` final node representations.
    pub z: Var,
    /// `C×N` class logits when the model has a label head.
    pub logits: Option<Var>,
}

impl<T: Real> Model<T> {
    /// Builds the model; `with_classifier` adds a label head sized to the
    /// graph's classes.
    pub fn new(graph: &HetPairGraph, config: &TrainConfig, with_classifier: bool) -> Result<Self> {
        config.validate()?;
        if with_classifier && graph.num_classes() < 2 {
            return Err(Error::Config("a label head needs at least two classes".into()));
        }
        let mut rng = stream_rng(config.seed, "model-init");
        let mut store = ParamStore::new();
        let d = config.dim;
        let fusion = FusionParams::init(
            &mut store,
            config.fusion_mode,
            d,
            graph.feature_dim(),
            graph.num_edge_types(),
            &mut rng,
        );
        let mut sets = enumerate_candidate_sets(graph);
        if let Some(cap) = config.hypergen.candidate_cap {
            cap_candidate_sets(&mut sets, cap, config.seed);
        }
        let bank = HyperedgeBank::init(&mut store, graph, sets, d, config.hypergen.threshold, &mut rng)?;
        let types = graph.num_node_types();
        let attention = HyperAttention::init(&mut store, d, config.heads, config.rounds, types, types, &mut rng)?;
        let structure = HyperStructure::new(graph.node_types(), types, bank.edge_masters(), &bank.edge_types(), types)?;
        let num_classes = graph.num_classes();
        let classifier = with_classifier.then(|| Classifier {
            w_hidden: store.add("classifier.w0", xavier_with(d, d, &mut rng)),
            b_hidden: store.add("classifier.b0", Matrix::zeros(d, 1)),
            w_out: store.add("classifier.w1", xavier_with(num_classes, d, &mut rng)),
            b_out: store.add("classifier.b1", Matrix::zeros(num_classes, 1)),
        });
        Ok(Self {
            store,
            fusion,
            bank,
            attention,
            classifier,
            config: config.clone(),
            relations: RelationIndex::new(graph),
            structure,
            raw: graph.features().cast(),
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.cols()
    }

    pub fn structure(&self) -> &HyperStructure {
        &self.structure
    }

    pub fn hypergen_config(&self) -> &HypergenConfig {
        &self.config.hypergen
    }

    /// Records the whole pipeline on a fresh tape. Dropout (raw features and
    /// the label head's hidden layer) is active only when `training`.
    pub fn forward(&self, training: bool, rng: &mut impl Rng) -> Result<Forward<T>> {
        self.forward_with(&self.store, training, rng)
    }

    /// [`Model::forward`] reading parameters from `store`, which must have
    /// the layout of `self.store`.
    pub fn forward_with(&self, store: &ParamStore<T>, training: bool, rng: &mut impl Rng) -> Result<Forward<T>> {
        let mut tape = Tape::new();
        let raw = tape.constant(self.raw.clone());
        let raw = tape.dropout(raw, self.config.dropout, training, rng)?;
        let x = self.fusion.forward(&mut tape, store, raw, &self.relations)?;
        let hyper = self.bank.forward(&mut tape, store, x, &self.config.hypergen)?;
        let rounds = self
            .attention
            .forward(&mut tape, store, x, hyper.h, hyper.edge_degree, &self.structure)?;
        let z = rounds.last().expect("at least one round").z;
        let logits = match &self.classifier {
            None => None,
            Some(c) => {
                let w0 = store.bind(&mut tape, c.w_hidden);
                let b0 = store.bind(&mut tape, c.b_hidden);
                let w1 = store.bind(&mut tape, c.w_out);
                let b1 = store.bind(&mut tape, c.b_out);
                let hid = tape.matmul(w0, z)?;
                let hid = tape.add_column(hid, b0)?;
                let hid = tape.relu(hid);
                let hid = tape.dropout(hid, self.config.dropout, training, rng)?;
                let out = tape.matmul(w1, hid)?;
                Some(tape.add_column(out, b1)?)
            }
        };
        Ok(Forward {
            tape,
            x,
            hyper,
            rounds,
            z,
            logits,
        })
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn evaluate(&self) -> Result<Forward<T>> {
        // dropout is inactive, so the generator is never drawn from
        self.forward(false, &mut stream_rng(0, "unused"))
    }

    /// Final node representations in evaluation mode.
    pub fn embeddings(&self) -> Result<Matrix<T>> {
        let f = self.evaluate()?;
        Ok(f.tape.value(f.z).clone())
    }

    /// Arg-max class of every node (ties resolve to the lower class id).
    pub fn predict(&self) -> Result<Vec<usize>> {
        let f = self.evaluate()?;
        let logits = f
            .logits
            .ok_or_else(|| Error::Config("model has no label head".into()))?;
        Ok(argmax_columns(f.tape.value(logits)))
    }
}

pub(crate) fn argmax_columns<T: Real>(m: &Matrix<T>) -> Vec<usize> {
    (0..m.cols())
        .map(|j| {
            let mut best = 0;
            for r in 1..m.rows() {
                if m.get(r, j) > m.get(best, j) {
                    best = r;
                }
            }
            best
        })
        .collect()
}

/// Mean cross-entropy of the logits at `nodes` against their labels.
pub fn label_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    graph: &HetPairGraph,
    nodes: &[usize],
) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::Config("label loss over an empty node set".into()));
    }
    let labels = nodes
        .iter()
        .map(|&v| {
            graph
                .label(v)
                .ok_or_else(|| Error::Config(format!("node {v} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let picked = tape.gather_columns(logits, Arc::new(nodes.to_vec()));
    Ok(tape.cross_entropy(picked, Arc::new(labels)))
}

/// `(1 − α)·label + α·recon`.
pub fn united_loss<T: Real>(tape: &mut Tape<T>, label: Var, recon: Var, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("train.alpha must lie in [0, 1], got {alpha}")));
    }
    let a = tape.scale(label, T::of(1.0 - alpha));
    let b = tape.scale(recon, T::of(alpha));
    tape.add(a, b)
}

/// Plain-number form of [`united_loss`].
pub fn united_loss_value(label: f64, recon: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * label + alpha * recon
}
