//! Classification metrics from label lists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{0} predictions for {1} truth labels")]
    LengthMismatch(usize, usize),
    #[error("no labels to evaluate")]
    Empty,
    #[error("binary metrics need labels 0 and 1, found {0}")]
    NonBinaryLabel(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Precision and recall of class 1.
    Binary,
    /// Unweighted mean of per-class precision and recall.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    /// Rows are true classes, columns predicted classes.
    pub confusion_matrix: Vec<Vec<u64>>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision and recall of class `c`; zero when a denominator is empty.
fn class_pr(cm: &[Vec<u64>], c: usize) -> (f64, f64) {
    let tp = cm[c][c];
    let predicted: u64 = cm.iter().map(|row| row[c]).sum();
    let actual: u64 = cm[c].iter().sum();
    (ratio(tp, predicted), ratio(tp, actual))
}

pub fn metrics_from_confusion(cm: Vec<Vec<u64>>, averaging: Averaging) -> Metrics {
    let total: u64 = cm.iter().flatten().sum();
    let trace: u64 = (0..cm.len()).map(|i| cm[i][i]).sum();
    let (precision, recall) = match averaging {
        Averaging::Binary => class_pr(&cm, 1),
        Averaging::Macro => {
            let k = cm.len() as f64;
            let (p, r) = (0..cm.len()).map(|c| class_pr(&cm, c)).fold((0.0, 0.0), |(p, r), (cp, cr)| (p + cp, r + cr));
            (p / k, r / k)
        }
    };
    Metrics {
        accuracy: ratio(trace, total),
        precision,
        recall,
        f1: f1_score(precision, recall),
        averaging,
        confusion_matrix: cm,
    }
}

pub fn evaluate(predictions: &[usize], truth: &[usize], averaging: Averaging) -> Result<Metrics, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = match averaging {
        Averaging::Binary => {
            if let Some(&bad) = predictions.iter().chain(truth).find(|&&l| l > 1) {
                return Err(MetricsError::NonBinaryLabel(bad));
            }
            2
        }
        Averaging::Macro => predictions.iter().chain(truth).max().copied().unwrap_or(0) + 1,
    };
    let mut cm = vec![vec![0u64; k]; k];
    for (&p, &t) in predictions.iter().zip(truth) {
        cm[t][p] += 1;
    }
    Ok(metrics_from_confusion(cm, averaging))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(cm: [[usize; 2]; 2]) -> (Vec<usize>, Vec<usize>) {
        let (mut p, mut t) = (Vec::new(), Vec::new());
        for (ti, row) in cm.iter().enumerate() {
            for (pi, &n) in row.iter().enumerate() {
                p.extend(std::iter::repeat_n(pi, n));
                t.extend(std::iter::repeat_n(ti, n));
            }
        }
        (p, t)
    }

    #[test]
    fn perfect_predictions() {
        for avg in [Averaging::Binary, Averaging::Macro] {
            let m = evaluate(&[0, 1, 1, 0], &[0, 1, 1, 0], avg).unwrap();
            assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn hand_counted_matrix() {
        let (p, t) = labels([[3, 1], [2, 4]]);
        let m = evaluate(&p, &t, Averaging::Binary).unwrap();
        assert_eq!(m.confusion_matrix, vec![vec![3, 1], vec![2, 4]]);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 0.727).abs() < 5e-4, "{}", m.f1);
    }

    #[test]
    fn errors() {
        assert_eq!(evaluate(&[0], &[0, 1], Averaging::Binary), Err(MetricsError::LengthMismatch(1, 2)));
        assert_eq!(evaluate(&[], &[], Averaging::Macro), Err(MetricsError::Empty));
        assert_eq!(evaluate(&[2], &[0], Averaging::Binary), Err(MetricsError::NonBinaryLabel(2)));
    }

    #[test]
    fn macro_averages_classes() {
        let m = evaluate(&[0, 1, 2, 2], &[0, 1, 2, 1], Averaging::Macro).unwrap();
        assert!((m.precision - (1.0 + 1.0 + 0.5) / 3.0).abs() < 1e-12);
        assert!((m.recall - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn identities(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = evaluate(&p, &t, Averaging::Macro).unwrap();
            let trace: u64 = (0..m.confusion_matrix.len()).map(|i| m.confusion_matrix[i][i]).sum();
            prop_assert_eq!(m.accuracy, trace as f64 / p.len() as f64);
            prop_assert!(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-12);
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn majority_predictor_accuracy(t in prop::collection::vec(0usize..2, 1..200)) {
            let ones = t.iter().filter(|&&l| l == 1).count();
            let majority = (2 * ones > t.len()) as usize;
            let m = evaluate(&vec![majority; t.len()], &t, Averaging::Binary).unwrap();
            let frac = t.iter().filter(|&&l| l == majority).count() as f64 / t.len() as f64;
            prop_assert_eq!(m.accuracy, frac);
        }
    }
}
