use std::fs;
use std::path::Path;

use serde::Serialize;

use hyperlfh::config::{RunConfig, KEYS};
use hyperlfh::hetgraph::{load_graph_dir, save_graph_dir, split_nodes, HetPairGraph};
use hyperlfh::numcore::Real;
use hyperlfh::synthdata::generate;
use hyperlfh::trainer::{
    self, eval_f1, gradcheck_instance, mean_by_value, write_metrics_csv, Checkpoint, EpochRecord, LinkReport, Model,
    GRADCHECK_TOLERANCE,
};

use crate::{Common, Failure, Precision};

type Outcome = Result<(), Failure>;

const CHECKPOINT_FILE: &str = "checkpoint.txt";

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Defaults, then `base` entries, then the config file, then `--set`, then `--seed`.
fn run_config(common: &Common, base: &[(String, String)]) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    for (k, v) in base {
        cfg.set(k, v)?;
    }
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&common.set)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_graph(cfg: &RunConfig) -> Result<HetPairGraph, Failure> {
    Ok(match &cfg.data_dir {
        Some(dir) => load_graph_dir(dir)?,
        None => generate(&cfg.synth)?,
    })
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&common.out).map_err(|e| io_failure(&common.out, e))?;
    Ok(&common.out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

fn describe(graph: &HetPairGraph) -> String {
    let labelled = (0..graph.num_nodes()).filter(|&v| graph.label(v).is_some()).count();
    format!(
        "{} nodes ({} types), {} directed edges ({} types), feature dim {}, {} labelled in {} classes",
        graph.num_nodes(),
        graph.num_node_types(),
        graph.num_edges(),
        graph.num_edge_types(),
        graph.feature_dim(),
        labelled,
        graph.num_classes()
    )
}

pub fn synth(common: &Common) -> Outcome {
    let cfg = run_config(common, &[])?;
    let graph = generate(&cfg.synth)?;
    let out = out_dir(common)?;
    save_graph_dir(&graph, out)?;
    println!("wrote {}: {}", out.display(), describe(&graph));
    Ok(())
}

pub fn validate(dir: &Path) -> Outcome {
    let graph = load_graph_dir(dir)?;
    graph.validate()?;
    println!("ok: {}", describe(&graph));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    precision: u32,
    seed: u64,
    best_epoch: usize,
    best_val_f1: f64,
    test_f1: Option<f64>,
    epochs: &'a [EpochRecord],
}

pub fn train(common: &Common) -> Outcome {
    let cfg = run_config(common, &[])?;
    match common.precision.unwrap_or(Precision::Double) {
        Precision::Single => train_as::<f32>(common, &cfg, Precision::Single),
        Precision::Double => train_as::<f64>(common, &cfg, Precision::Double),
    }
}

fn train_as<T: Real>(common: &Common, cfg: &RunConfig, precision: Precision) -> Outcome {
    let graph = load_graph(cfg)?;
    let out = trainer::train::<T>(&graph, &cfg.train_config())?;
    let dir = out_dir(common)?;
    write_metrics_csv(&dir.join("metrics.csv"), &out.history)?;
    write_json(
        &dir.join("metrics.json"),
        &TrainSummary {
            precision: precision.bits(),
            seed: cfg.seed,
            best_epoch: out.best_epoch,
            best_val_f1: out.best_val_f1,
            test_f1: out.test_f1,
            epochs: &out.history,
        },
    )?;
    let mut meta = cfg.entries();
    meta.push(("precision".into(), precision.bits().to_string()));
    meta.push(("best_epoch".into(), out.best_epoch.to_string()));
    Checkpoint::from_store(&out.model.store, meta).save(&dir.join(CHECKPOINT_FILE))?;
    println!(
        "trained {} epochs; best epoch {} val macro-F1 {:.4}{}",
        out.history.len(),
        out.best_epoch,
        out.best_val_f1,
        out.test_f1.map(|f| format!(", test macro-F1 {f:.4}")).unwrap_or_default()
    );
    println!("wrote metrics.csv, metrics.json and {CHECKPOINT_FILE} to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    train_f1: f64,
    val_f1: f64,
    test_f1: f64,
}

pub fn eval(common: &Common, checkpoint: &Path) -> Outcome {
    let ck = Checkpoint::load(checkpoint)?;
    let base: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| ck.meta(k.key).map(|v| (k.key.to_string(), v.to_string())))
        .collect();
    let cfg = run_config(common, &base)?;
    let precision = match (common.precision, ck.meta("precision")) {
        (Some(p), _) => p,
        (None, Some("32")) => Precision::Single,
        _ => Precision::Double,
    };
    match precision {
        Precision::Single => eval_as::<f32>(common, &cfg, &ck),
        Precision::Double => eval_as::<f64>(common, &cfg, &ck),
    }
}

fn eval_as<T: Real>(common: &Common, cfg: &RunConfig, ck: &Checkpoint) -> Outcome {
    let graph = load_graph(cfg)?;
    if !graph.is_labeled() {
        return Err(Failure::Input("eval needs a labelled graph".into()));
    }
    let tc = cfg.train_config();
    let mut model = Model::<T>::new(&graph, &tc, true)?;
    ck.restore_into(&mut model.store)?;
    let split = split_nodes(&graph, tc.train_ratio, tc.val_ratio, tc.seed)?;
    let summary = EvalSummary {
        train_f1: eval_f1(&model, &graph, &split.train)?,
        val_f1: eval_f1(&model, &graph, &split.val)?,
        test_f1: eval_f1(&model, &graph, &split.test)?,
    };
    let dir = out_dir(common)?;
    write_json(&dir.join("eval.json"), &summary)?;
    let mut csv = String::from("id,prediction\n");
    for (v, c) in model.predict()?.into_iter().enumerate() {
        csv.push_str(&format!("{v},{c}\n"));
    }
    let path = dir.join("predictions.csv");
    fs::write(&path, csv).map_err(|e| io_failure(&path, e))?;
    println!(
        "macro-F1 train {:.4} val {:.4} test {:.4}",
        summary.train_f1, summary.val_f1, summary.test_f1
    );
    Ok(())
}

pub fn linkpred(common: &Common) -> Outcome {
    let cfg = run_config(common, &[])?;
    match common.precision.unwrap_or(Precision::Double) {
        Precision::Single => linkpred_as::<f32>(common, &cfg),
        Precision::Double => linkpred_as::<f64>(common, &cfg),
    }
}

fn linkpred_as<T: Real>(common: &Common, cfg: &RunConfig) -> Outcome {
    let graph = load_graph(cfg)?;
    let (report, outcome) = trainer::run_link_prediction::<T>(&graph, &cfg.train_config(), &cfg.link)?;
    let dir = out_dir(common)?;
    write_metrics_csv(&dir.join("metrics.csv"), &outcome.history)?;
    write_json(&dir.join("linkpred.json"), &report)?;
    print_link(&report);
    Ok(())
}

fn print_link(r: &LinkReport) {
    if let Some(w) = &r.warning {
        eprintln!("warning: {w}");
    }
    println!(
        "link F1 {:.4}, accuracy {:.4} on {} held-out pairs ({} positives, {} negatives)",
        r.f1, r.accuracy, r.eval_pairs, r.positives, r.negatives
    );
}

pub fn sweep(common: &Common) -> Outcome {
    let cfg = run_config(common, &[])?;
    let graph = load_graph(&cfg)?;
    let s = &cfg.sweep;
    let base = cfg.train_config();
    let rows = match common.precision.unwrap_or(Precision::Double) {
        Precision::Single => trainer::sweep::<f32>(&graph, &base, s.param, &s.values, &s.seeds)?,
        Precision::Double => trainer::sweep::<f64>(&graph, &base, s.param, &s.values, &s.seeds)?,
    };
    let dir = out_dir(common)?;
    let path = dir.join("sweep.csv");
    fs::write(&path, trainer::sweep_csv(&rows)).map_err(|e| io_failure(&path, e))?;
    for (value, f1) in mean_by_value(&rows) {
        println!("{}={value}: mean test macro-F1 {f1:.4}", s.param);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn gradcheck(common: &Common) -> Outcome {
    let cfg = run_config(common, &[])?;
    if common.precision == Some(Precision::Single) {
        return Err(Failure::Input("gradcheck runs in 64-bit precision only".into()));
    }
    let report = match &cfg.data_dir {
        Some(dir) => trainer::gradcheck(&load_graph_dir(dir)?, &cfg.train_config())?,
        None => {
            let (graph, tc) = gradcheck_instance(cfg.seed)?;
            trainer::gradcheck(&graph, &tc)?
        }
    };
    let (analytic, numeric) = report.worst_pair;
    let worst = report
        .worst
        .as_ref()
        .map(|(name, i)| format!(" at {name}[{i}] (analytic {analytic:.6e}, numeric {numeric:.6e})"))
        .unwrap_or_default();
    println!(
        "max relative error {:.3e} over {} entries{worst}",
        report.max_rel_error, report.entries_checked
    );
    if report.max_rel_error > GRADCHECK_TOLERANCE {
        return Err(Failure::Numerical(format!(
            "gradient check failed: {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}
