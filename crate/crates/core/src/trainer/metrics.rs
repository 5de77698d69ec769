use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Unweighted mean of per-class F1 over every class that occurs in the
/// truth or the predictions. Empty input scores 0.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    let classes = truth.iter().chain(pred).copied().max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        count += 1;
        total += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// F1 of the positive class for binary labels.
pub fn binary_f1(truth: &[bool], pred: &[bool]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t && p).count();
    let fp = truth.iter().zip(pred).filter(|&(&t, &p)| !t && p).count();
    let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t && !p).count();
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn accuracy<L: PartialEq>(truth: &[L], pred: &[L]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    /// Excluded from the CSV so that reruns compare byte for byte.
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,val_f1";

pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1).expect("write to string");
    }
    s
}

pub fn write_metrics_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(metrics_csv(records).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::numcore::stream_rng;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1, 0];
        assert_eq!(macro_f1(&t, &t), 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        // class 0: precision 1/3, recall 1 → F1 1/2; classes 1, 2: F1 0
        let truth = [0, 0, 1, 1, 2, 2];
        let pred = [0; 6];
        assert!((macro_f1(&truth, &pred) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn hand_counted_case() {
        // class 0: tp 1 fp 1 fn 1 → 1/2; class 1: tp 1 fp 1 fn 0 → 2/3;
        // class 2: tp 0 fp 0 fn 1 → 0
        let truth = [0, 0, 1, 2];
        let pred = [0, 1, 1, 0];
        let expect = (0.5 + 2.0 / 3.0 + 0.0) / 3.0;
        assert!((macro_f1(&truth, &pred) - expect).abs() < 1e-15);
        assert_eq!(accuracy(&truth, &pred), 0.5);
    }

    #[test]
    fn binary_scores() {
        let t = [true, true, false, false];
        assert_eq!(binary_f1(&t, &[true, false, false, true]), 0.5);
        assert_eq!(binary_f1(&t, &[false; 4]), 0.0);
    }

    #[test]
    fn random_predictor_near_chance() {
        // uniformly random labels on balanced classes: each class F1 ≈ 1/3
        for seed in 0..20 {
            let mut rng = stream_rng(seed, "chance");
            let truth: Vec<usize> = (0..3000).map(|i| i % 3).collect();
            let pred: Vec<usize> = (0..3000).map(|_| rng.random_range(0..3)).collect();
            assert!((macro_f1(&truth, &pred) - 1.0 / 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn csv_layout() {
        let r = EpochRecord {
            epoch: 1,
            train_loss: 1.5,
            val_loss: 0.25,
            val_f1: 1.0 / 3.0,
            seconds: 9.0,
        };
        assert_eq!(metrics_csv(&[r]), "epoch,train_loss,val_loss,val_f1\n1,1.5,0.25,0.3333333333333333\n");
    }

    proptest! {
        #[test]
        fn invariant_under_class_relabeling(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
        ) {
            let perm = [2, 0, 3, 1];
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let tp: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
            let pp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            prop_assert!((macro_f1(&t, &p) - macro_f1(&tp, &pp)).abs() < 1e-12);
            let f = macro_f1(&t, &p);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
