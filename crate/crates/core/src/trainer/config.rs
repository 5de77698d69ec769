use crate::error::{Error, Result};
use crate::fusion::{FusionMode, DEFAULT_DIM};
use crate::hyperattn::{DEFAULT_HEADS, DEFAULT_ROUNDS};
use crate::hypergen::HypergenConfig;
use crate::numcore::DEFAULT_LR;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_DROPOUT: f64 = 0.3;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_PATIENCE: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the reconstruction loss in the united loss.
    pub alpha: f64,
    pub hypergen: HypergenConfig,
    pub lr: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub heads: usize,
    pub rounds: usize,
    pub dim: usize,
    pub fusion_mode: FusionMode,
    pub train_ratio: f64,
    pub val_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            hypergen: HypergenConfig::default(),
            lr: DEFAULT_LR,
            dropout: DEFAULT_DROPOUT,
            max_epochs: DEFAULT_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            heads: DEFAULT_HEADS,
            rounds: DEFAULT_ROUNDS,
            dim: DEFAULT_DIM,
            fusion_mode: FusionMode::Relational,
            train_ratio: 0.2,
            val_ratio: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("train.alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("train.dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.max_epochs == 0 {
            return bad("train.epochs must be positive".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad(format!(
                "train.patience must lie in 1..={} (train.epochs), got {}",
                self.max_epochs, self.patience
            ));
        }
        if self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!(
                "fusion.dim ({}) must be a positive multiple of hyperattn.heads ({})",
                self.dim, self.heads
            ));
        }
        if self.rounds == 0 {
            return bad("hyperattn.rounds must be at least 1".into());
        }
        let h = &self.hypergen;
        for (k, v) in [("hypergen.lambda", h.lambda), ("hypergen.gamma", h.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} must be a finite non-negative number, got {v}"));
            }
        }
        if !(h.threshold >= 0.0 && h.threshold < 1.0) {
            return bad(format!("hypergen.threshold must lie in [0, 1), got {}", h.threshold));
        }
        if h.candidate_cap == Some(0) {
            return bad("hypergen.candidate_cap must be positive (0 is not a cap)".into());
        }
        if !(self.train_ratio > 0.0 && self.val_ratio > 0.0 && self.train_ratio + self.val_ratio <= 1.0) {
            return bad(format!(
                "split.train ({}) and split.val ({}) must be positive with sum <= 1",
                self.train_ratio, self.val_ratio
            ));
        }
        Ok(())
    }
}

/// What supervises the model that produces link-prediction embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LinkObjective {
    /// United loss when labels exist, reconstruction only otherwise.
    #[default]
    Auto,
    /// Reconstruction loss only (`α = 1`).
    Reconstruction,
}

impl std::str::FromStr for LinkObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" | "united" => Ok(Self::Auto),
            "reconstruction" => Ok(Self::Reconstruction),
            other => Err(Error::Config(format!(
                "linkpred.objective must be auto or reconstruction, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for LinkObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Reconstruction => "reconstruction",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkConfig {
    /// Share of undirected node pairs hidden as positives.
    pub fraction: f64,
    pub objective: LinkObjective,
    /// Share of the labelled pairs used to fit the edge classifier.
    pub fit_fraction: f64,
    pub classifier_steps: usize,
    pub classifier_lr: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            objective: LinkObjective::Auto,
            fit_fraction: 0.8,
            classifier_steps: 200,
            classifier_lr: 0.05,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!(
                "linkpred.fraction must lie in (0, 1), got {}",
                self.fraction
            )));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction < 1.0) {
            return Err(Error::Config(format!(
                "linkpred.fit_fraction must lie in (0, 1), got {}",
                self.fit_fraction
            )));
        }
        if self.classifier_steps == 0 || self.classifier_lr.is_nan() || self.classifier_lr <= 0.0 {
            return Err(Error::Config(
                "linkpred.classifier_steps and linkpred.classifier_lr must be positive".into(),
            ));
        }
        Ok(())
    }
}
