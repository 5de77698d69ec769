//! United-loss training, evaluation, link prediction and sweeps.

mod checkpoint;
mod config;
mod gradcheck;
mod linkpred;
mod metrics;
mod model;
mod sweep;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    LinkConfig, LinkObjective, TrainConfig, DEFAULT_ALPHA, DEFAULT_DROPOUT, DEFAULT_EPOCHS, DEFAULT_PATIENCE,
};
pub use gradcheck::{gradcheck, gradcheck_instance, GRADCHECK_TOLERANCE};
pub use linkpred::{hadamard_features, link_predict, run_link_prediction, LinkReport};
pub use metrics::{accuracy, binary_f1, macro_f1, metrics_csv, write_metrics_csv, EpochRecord, METRICS_HEADER};
pub use model::{label_loss, united_loss, united_loss_value, Classifier, Forward, Model};
pub use sweep::{mean_by_value, sweep, sweep_csv, SweepParam, SweepRow, SWEEP_HEADER};
pub use train::{eval_f1, train, TrainOutcome};

#[cfg(test)]
mod tests;
