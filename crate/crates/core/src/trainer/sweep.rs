use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hetgraph::HetPairGraph;
use crate::numcore::Real;
use crate::trainer::train::train;
use crate::trainer::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Gamma,
    Alpha,
    Dim,
    Heads,
    TrainRatio,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        Self::Lambda,
        Self::Gamma,
        Self::Alpha,
        Self::Dim,
        Self::Heads,
        Self::TrainRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Gamma => "gamma",
            Self::Alpha => "alpha",
            Self::Dim => "dim",
            Self::Heads => "heads",
            Self::TrainRatio => "train_ratio",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("sweep value {v} for {} must be a positive integer", self.name())))
            }
        };
        match self {
            Self::Lambda => cfg.hypergen.lambda = value,
            Self::Gamma => cfg.hypergen.gamma = value,
            Self::Alpha => cfg.alpha = value,
            Self::Dim => cfg.dim = count(value)?,
            Self::Heads => cfg.heads = count(value)?,
            Self::TrainRatio => {
                cfg.train_ratio = value;
                cfg.val_ratio = cfg.val_ratio.min(1.0 - value);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "sweep.param must be one of lambda, gamma, alpha, dim, heads, train_ratio; got {s:?}"
            ))
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    /// Test macro-F1 of the best-validation checkpoint.
    pub f1: f64,
    pub seed: u64,
}

/// One training run per (value, seed); runs are independent and may execute
/// in parallel. Rows come back in (value, seed) order.
pub fn sweep<T: Real>(
    graph: &HetPairGraph,
    base: &TrainConfig,
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    // validate everything before spending time on training
    for &(v, _) in &jobs {
        param.apply(base, v)?;
    }
    jobs.par_iter()
        .map(|&(value, seed)| {
            let cfg = TrainConfig {
                seed,
                ..param.apply(base, value)?
            };
            let out = train::<T>(graph, &cfg)?;
            log::info!("sweep {param}={value} seed {seed}: test f1 {:?}", out.test_f1);
            Ok(SweepRow {
                param: param.name().to_string(),
                value,
                f1: out.test_f1.unwrap_or(0.0),
                seed,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "param,value,f1,seed";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.param, r.value, r.f1, r.seed));
    }
    s
}

/// Mean F1 per swept value, in first-appearance order.
pub fn mean_by_value(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(v, _, _)| *v == r.value) {
            Some(e) => {
                e.1 += r.f1;
                e.2 += 1;
            }
            None => out.push((r.value, r.f1, 1)),
        }
    }
    out.into_iter().map(|(v, s, n)| (v, s / n as f64)).collect()
}
