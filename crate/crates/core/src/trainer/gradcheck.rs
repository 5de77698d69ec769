use crate::error::{Error, Result};
use crate::hetgraph::HetPairGraph;
use crate::numcore::{finite_diff_check, stream_rng, GradCheckReport, DEFAULT_STEP};
use crate::synthdata::{generate, SynthConfig};
use crate::trainer::model::{label_loss, united_loss, Model};
use crate::trainer::TrainConfig;

/// Largest relative error the gradient check accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Finite-difference check of every parameter of a freshly initialized
/// model under the evaluation-mode united loss (reconstruction only when
/// the graph has no labels). Every scalar is perturbed, so keep the graph
/// and `config.dim` small.
pub fn gradcheck(graph: &HetPairGraph, config: &TrainConfig) -> Result<GradCheckReport> {
    let labelled: Vec<usize> = (0..graph.num_nodes()).filter(|&v| graph.label(v).is_some()).collect();
    let supervised = graph.num_classes() >= 2 && !labelled.is_empty();
    let model = Model::<f64>::new(graph, config, supervised)?;
    // surface forward errors here; the closure below cannot return them
    model.evaluate()?;
    let alpha = config.alpha;
    let report = finite_diff_check(
        &model.store,
        |tape, store| {
            let mut f = model
                .forward_with(store, false, &mut stream_rng(0, "unused"))
                .expect("forward succeeded once");
            std::mem::swap(tape, &mut f.tape);
            match f.logits {
                Some(logits) => {
                    let label = label_loss(tape, logits, graph, &labelled).expect("labelled nodes");
                    united_loss(tape, label, f.hyper.recon_loss, alpha).expect("valid alpha")
                }
                None => f.hyper.recon_loss,
            }
        },
        DEFAULT_STEP,
    );
    if !report.max_rel_error.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            tensor: report.worst.map_or("loss".into(), |(n, i)| format!("{n}[{i}]")),
        });
    }
    Ok(report)
}

/// The six-node instance used by the command-line check: four labelled
/// primary nodes in two classes and two auxiliary nodes.
pub fn gradcheck_instance(seed: u64) -> Result<(HetPairGraph, TrainConfig)> {
    let graph = generate(&SynthConfig {
        num_classes: 2,
        nodes_per_class: 2,
        node_types: 2,
        aux_per_class: 1,
        p_intra: 0.9,
        p_inter: 0.3,
        feature_dim: 3,
        seed,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        dim: 4,
        heads: 2,
        seed,
        ..TrainConfig::default()
    };
    Ok((graph, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_node_instance_passes() {
        let (g, cfg) = gradcheck_instance(0).unwrap();
        assert_eq!(g.num_nodes(), 6);
        let r = gradcheck(&g, &cfg).unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
        assert!(r.entries_checked > 100);
    }
}
