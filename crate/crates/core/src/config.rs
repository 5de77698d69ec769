//! Flat `key = value` run configuration.
//!
//! Precedence is defaults, then a config file, then `key=value` overrides.
//! Every key is listed in [`KEYS`]; anything else is rejected by name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::synthdata::SynthConfig;
use crate::trainer::{LinkConfig, SweepParam, TrainConfig};

pub struct KeyInfo {
    pub key: &'static str,
    pub help: &'static str,
}

const fn k(key: &'static str, help: &'static str) -> KeyInfo {
    KeyInfo { key, help }
}

pub const KEYS: &[KeyInfo] = &[
    k("seed", "run seed for initialization, dropout, splits and link sampling"),
    k("data.dir", "graph directory (nodes.csv, edges.csv, labels.csv); empty means synthetic"),
    k("fusion.mode", "pairwise fusion: relational or linear"),
    k("fusion.dim", "embedding size d"),
    k("hypergen.lambda", "weight of the reconstruction error"),
    k("hypergen.gamma", "weight of the l2 norm of the coefficients"),
    k("hypergen.l1", "weight of the l1 norm of the coefficients"),
    k("hypergen.threshold", "coefficient above which a candidate joins a hyperedge"),
    k("hypergen.candidate_cap", "max candidates per set, or none"),
    k("hyperattn.heads", "attention heads K (must divide fusion.dim)"),
    k("hyperattn.rounds", "stacked attention layers"),
    k("train.alpha", "reconstruction weight in the united loss"),
    k("train.lr", "Adam learning rate"),
    k("train.dropout", "dropout rate"),
    k("train.epochs", "maximum epochs"),
    k("train.patience", "epochs without validation improvement before stopping"),
    k("split.train", "share of labelled nodes used for training"),
    k("split.val", "share of labelled nodes used for validation"),
    k("synth.classes", "number of classes"),
    k("synth.nodes_per_class", "labelled primary nodes per class"),
    k("synth.node_types", "node types including the primary type"),
    k("synth.aux_per_class", "auxiliary nodes per class and auxiliary type"),
    k("synth.p_intra", "link probability for matching classes"),
    k("synth.p_inter", "link probability for differing classes"),
    k("synth.dim", "raw feature dimension"),
    k("synth.noise", "feature noise standard deviation"),
    k("synth.mean_scale", "norm of each class mean"),
    k("synth.seed", "generator seed"),
    k("linkpred.fraction", "share of undirected edges hidden as positives"),
    k("linkpred.objective", "auto (united loss when labelled) or reconstruction"),
    k("linkpred.fit_fraction", "share of pairs used to fit the edge classifier"),
    k("linkpred.steps", "edge classifier optimizer steps"),
    k("linkpred.lr", "edge classifier learning rate"),
    k("sweep.param", "lambda, gamma, alpha, dim, heads or train_ratio"),
    k("sweep.values", "comma-separated values"),
    k("sweep.seeds", "comma-separated seeds, one run per value and seed"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            param: SweepParam::Lambda,
            values: vec![0.0001, 0.002, 0.02, 0.2, 2.0, 20.0],
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    /// The seed field is ignored; [`RunConfig::train_config`] fills it in.
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub link: LinkConfig,
    pub sweep: SweepSettings,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let s = &mut self.synth;
        let l = &mut self.link;
        match key {
            "seed" => self.seed = num(key, v)?,
            "data.dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "fusion.mode" => t.fusion_mode = v.parse()?,
            "fusion.dim" => t.dim = num(key, v)?,
            "hypergen.lambda" => t.hypergen.lambda = num(key, v)?,
            "hypergen.gamma" => t.hypergen.gamma = num(key, v)?,
            "hypergen.l1" => t.hypergen.l1 = num(key, v)?,
            "hypergen.threshold" => t.hypergen.threshold = num(key, v)?,
            "hypergen.candidate_cap" => {
                t.hypergen.candidate_cap = if v == "none" { None } else { Some(num(key, v)?) }
            }
            "hyperattn.heads" => t.heads = num(key, v)?,
            "hyperattn.rounds" => t.rounds = num(key, v)?,
            "train.alpha" => t.alpha = num(key, v)?,
            "train.lr" => t.lr = num(key, v)?,
            "train.dropout" => t.dropout = num(key, v)?,
            "train.epochs" => t.max_epochs = num(key, v)?,
            "train.patience" => t.patience = num(key, v)?,
            "split.train" => t.train_ratio = num(key, v)?,
            "split.val" => t.val_ratio = num(key, v)?,
            "synth.classes" => s.num_classes = num(key, v)?,
            "synth.nodes_per_class" => s.nodes_per_class = num(key, v)?,
            "synth.node_types" => s.node_types = num(key, v)?,
            "synth.aux_per_class" => s.aux_per_class = num(key, v)?,
            "synth.p_intra" => s.p_intra = num(key, v)?,
            "synth.p_inter" => s.p_inter = num(key, v)?,
            "synth.dim" => s.feature_dim = num(key, v)?,
            "synth.noise" => s.noise = num(key, v)?,
            "synth.mean_scale" => s.mean_scale = num(key, v)?,
            "synth.seed" => s.seed = num(key, v)?,
            "linkpred.fraction" => l.fraction = num(key, v)?,
            "linkpred.objective" => l.objective = v.parse()?,
            "linkpred.fit_fraction" => l.fit_fraction = num(key, v)?,
            "linkpred.steps" => l.classifier_steps = num(key, v)?,
            "linkpred.lr" => l.classifier_lr = num(key, v)?,
            "sweep.param" => self.sweep.param = v.parse()?,
            "sweep.values" => self.sweep.values = list(key, v)?,
            "sweep.seeds" => self.sweep.seeds = list(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let s = &self.synth;
        let l = &self.link;
        Some(match key {
            "seed" => self.seed.to_string(),
            "data.dir" => self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "fusion.mode" => t.fusion_mode.to_string(),
            "fusion.dim" => t.dim.to_string(),
            "hypergen.lambda" => t.hypergen.lambda.to_string(),
            "hypergen.gamma" => t.hypergen.gamma.to_string(),
            "hypergen.l1" => t.hypergen.l1.to_string(),
            "hypergen.threshold" => t.hypergen.threshold.to_string(),
            "hypergen.candidate_cap" => t.hypergen.candidate_cap.map_or("none".into(), |c| c.to_string()),
            "hyperattn.heads" => t.heads.to_string(),
            "hyperattn.rounds" => t.rounds.to_string(),
            "train.alpha" => t.alpha.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.dropout" => t.dropout.to_string(),
            "train.epochs" => t.max_epochs.to_string(),
            "train.patience" => t.patience.to_string(),
            "split.train" => t.train_ratio.to_string(),
            "split.val" => t.val_ratio.to_string(),
            "synth.classes" => s.num_classes.to_string(),
            "synth.nodes_per_class" => s.nodes_per_class.to_string(),
            "synth.node_types" => s.node_types.to_string(),
            "synth.aux_per_class" => s.aux_per_class.to_string(),
            "synth.p_intra" => s.p_intra.to_string(),
            "synth.p_inter" => s.p_inter.to_string(),
            "synth.dim" => s.feature_dim.to_string(),
            "synth.noise" => s.noise.to_string(),
            "synth.mean_scale" => s.mean_scale.to_string(),
            "synth.seed" => s.seed.to_string(),
            "linkpred.fraction" => l.fraction.to_string(),
            "linkpred.objective" => l.objective.to_string(),
            "linkpred.fit_fraction" => l.fit_fraction.to_string(),
            "linkpred.steps" => l.classifier_steps.to_string(),
            "linkpred.lr" => l.classifier_lr.to_string(),
            "sweep.param" => self.sweep.param.to_string(),
            "sweep.values" => join(&self.sweep.values),
            "sweep.seeds" => join(&self.sweep.seeds),
            _ => return None,
        })
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.key.to_string(), self.get(k.key).expect("registered key")))
            .collect()
    }

    /// Applies `key = value` lines; `#` starts a comment. `origin` names the
    /// source in error messages.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Config(format!("{origin} line {}: {}", i + 1, e.message()));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(Error::Config(format!("expected `key = value`, found {line:?}"))))?;
            self.set(key.trim(), value.trim()).map_err(at)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`; validated.
    pub fn load<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.synth.validate()?;
        self.link.validate()?;
        if self.sweep.values.is_empty() || self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep.values and sweep.seeds must not be empty".into()));
        }
        for &v in &self.sweep.values {
            self.sweep.param.apply(&self.train_config(), v)?;
        }
        Ok(())
    }

    /// The configuration as a config file that reproduces it.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, value) in self.entries() {
            writeln!(s, "{key} = {value}").expect("write to string");
        }
        s
    }

    /// One line per key with its default and help text.
    pub fn help_text() -> String {
        let d = Self::default();
        let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
        let mut s = String::new();
        for k in KEYS {
            let v = d.get(k.key).expect("registered key");
            let v = if v.is_empty() { "\"\"".to_string() } else { v };
            writeln!(s, "  {:width$}  {} (default {v})", k.key, k.help).expect("write to string");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let d = RunConfig::default();
        let mut back = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        back.apply_text(&d.to_text(), "t").unwrap();
        assert_eq!(back, d);
        assert_eq!(d.get("train.alpha").as_deref(), Some("0.1"));
        assert_eq!(d.get("hypergen.lambda").as_deref(), Some("0.2"));
        assert_eq!(d.get("hyperattn.heads").as_deref(), Some("4"));
        assert_eq!(d.get("fusion.dim").as_deref(), Some("256"));
        assert_eq!(d.get("train.lr").as_deref(), Some("0.002"));
        assert_eq!(d.get("train.patience").as_deref(), Some("30"));
    }

    #[test]
    fn every_key_is_settable_and_listed() {
        let d = RunConfig::default();
        for key in KEYS {
            let mut c = RunConfig::default();
            let v = d.get(key.key).unwrap();
            c.set(key.key, &v).unwrap();
            assert_eq!(c, d, "{}", key.key);
        }
        assert_eq!(d.entries().len(), KEYS.len());
        assert!(RunConfig::help_text().contains("hypergen.candidate_cap"));
    }

    #[test]
    fn precedence_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.conf");
        std::fs::write(&f, "# a comment\ntrain.alpha = 0.3  # trailing\n\nseed=5\n").unwrap();
        let c = RunConfig::load(Some(&f), &["train.alpha=0.4"]).unwrap();
        assert_eq!(c.train.alpha, 0.4);
        assert_eq!(c.seed, 5);
        assert_eq!(c.train_config().seed, 5);
        let c = RunConfig::load(Some(&f), &[] as &[&str]).unwrap();
        assert_eq!(c.train.alpha, 0.3);
    }

    #[test]
    fn errors_name_key_and_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("seed = 1\nbogus.key = 3\n", "x.conf").unwrap_err().to_string();
        assert!(e.contains("bogus.key") && e.contains("line 2") && e.contains("x.conf"), "{e}");
        let e = c.apply_overrides(&["train.alpha=abc"]).unwrap_err().to_string();
        assert!(e.contains("train.alpha"), "{e}");
        let e = RunConfig::load(None, &["train.alpha=2"]).unwrap_err().to_string();
        assert!(e.contains("train.alpha"), "{e}");
        let e = RunConfig::load(None, &["fusion.dim=30"]).unwrap_err().to_string();
        assert!(e.contains("fusion.dim"), "{e}");
        assert!(RunConfig::load(None, &["nokey"]).is_err());
    }

    #[test]
    fn lists_and_options() {
        let c = RunConfig::load(
            None,
            &["sweep.param=gamma", "sweep.values=0.002, 0.2,20", "sweep.seeds=1,2", "hypergen.candidate_cap=7"],
        )
        .unwrap();
        assert_eq!(c.sweep.param, SweepParam::Gamma);
        assert_eq!(c.sweep.values, vec![0.002, 0.2, 20.0]);
        assert_eq!(c.sweep.seeds, vec![1, 2]);
        assert_eq!(c.train.hypergen.candidate_cap, Some(7));
        assert_eq!(c.get("hypergen.candidate_cap").as_deref(), Some("7"));
    }
}
