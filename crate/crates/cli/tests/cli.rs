use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hyperlfh::config::KEYS;

const SMALL: &[&str] = &[
    "--set",
    "synth.nodes_per_class=10",
    "--set",
    "synth.aux_per_class=4",
    "--set",
    "synth.p_intra=0.3",
    "--set",
    "synth.dim=8",
    "--set",
    "fusion.dim=8",
    "--set",
    "hyperattn.heads=2",
    "--set",
    "train.epochs=6",
    "--set",
    "train.patience=3",
];

fn hyperlfh(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperlfh"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn small(cmd: &[&str], extra: &[&str], out: &Path) -> Output {
    let args: Vec<&str> = cmd.iter().chain(SMALL).chain(extra).copied().collect();
    hyperlfh(&args, out)
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn every_command_help_lists_all_keys() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        vec!["--help"],
        vec!["synth", "--help"],
        vec!["graph", "validate", "--help"],
        vec!["train", "--help"],
        vec!["eval", "--help"],
        vec!["linkpred", "--help"],
        vec!["sweep", "--help"],
        vec!["gradcheck", "--help"],
    ] {
        let out = hyperlfh(&cmd, dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd:?}");
        let help = text(&out.stdout);
        for k in KEYS {
            assert!(help.contains(k.key), "{cmd:?} misses {}", k.key);
        }
        assert!(help.contains("hypergen.lambda") && help.contains("(default 0.2)"));
    }
}

#[test]
fn config_errors_exit_one_and_name_the_culprit() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperlfh(&["train", "--set", "train.alpah=0.1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("train.alpah"));

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nseed = 3\nhypergen.lambda = lots\n").unwrap();
    let out = hyperlfh(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("run.cfg line 3") && err.contains("hypergen.lambda"), "{err}");

    let out = hyperlfh(&["train", "--precision", "16"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = hyperlfh(&["graph", "validate", "/nonexistent/graph"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_writes_reproducible_artifacts_and_eval_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = small(&["train"], &["--seed", "5"], out);
        assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    }
    let csv = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("metrics.csv")).unwrap());
    let rows = text(&csv).lines().count() - 1;
    assert!((1..=6).contains(&rows));
    assert!(text(&csv).starts_with("epoch,train_loss,val_loss,val_f1\n"));

    let json: serde_json::Value = serde_json::from_slice(&fs::read(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["precision"], 64);
    assert_eq!(json["seed"], 5);
    assert_eq!(json["epochs"].as_array().unwrap().len(), rows);

    let ck = a.join("checkpoint.txt");
    let res = hyperlfh(&["eval", ck.to_str().unwrap()], &dir.path().join("e"));
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    let eval: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("e/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["val_f1"], json["best_val_f1"]);
    assert_eq!(eval["test_f1"], json["test_f1"]);
}

#[test]
fn single_precision_trains() {
    let dir = tempfile::tempdir().unwrap();
    let res = small(&["train"], &["--precision", "32"], dir.path());
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    let ck = fs::read_to_string(dir.path().join("checkpoint.txt")).unwrap();
    assert!(ck.contains("meta precision = 32"));
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let res = small(&["train"], &["--set", "train.lr=1e200"], dir.path());
    assert_eq!(res.status.code(), Some(2), "{}", text(&res.stderr));
    assert!(text(&res.stderr).contains("non-finite"));
}

#[test]
fn gradcheck_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let res = hyperlfh(&["gradcheck", "--seed", "2"], dir.path());
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    assert!(text(&res.stdout).starts_with("max relative error"));
}

#[test]
fn synth_output_validates_and_trains() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("graph");
    let res = small(&["synth"], &[], &g);
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    for f in ["nodes.csv", "edges.csv", "labels.csv"] {
        assert!(g.join(f).exists(), "{f}");
    }
    let res = hyperlfh(&["graph", "validate", g.to_str().unwrap()], dir.path());
    assert_eq!(res.status.code(), Some(0));
    assert!(text(&res.stdout).starts_with("ok: 54 nodes"));

    let data = format!("data.dir={}", g.display());
    let res = small(&["train"], &["--set", &data], &dir.path().join("t"));
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
}

#[test]
fn sweep_and_linkpred_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let res = small(
        &["sweep"],
        &["--set", "sweep.param=alpha", "--set", "sweep.values=0.1,0.5", "--set", "sweep.seeds=0,1"],
        dir.path(),
    );
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("param,value,f1,seed\n"));
    assert_eq!(csv.lines().count(), 5);

    let res = small(&["linkpred"], &[], dir.path());
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("linkpred.json")).unwrap()).unwrap();
    let f1 = report["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert_eq!(report["positives"], report["negatives"]);
}
