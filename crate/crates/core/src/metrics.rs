//! Classification metrics over confusion matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::ConfusionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    MeanRecall,
}

impl Metric {
    pub fn compute(self, cm: &ConfusionMatrix) -> Result<f64> {
        match self {
            Metric::Accuracy => accuracy(cm),
            Metric::MeanRecall => mean_recall(cm),
        }
    }

    pub fn evaluate(self, truth: &[usize], predicted: &[usize], class_count: usize) -> Result<f64> {
        self.compute(&ConfusionMatrix::from_predictions(truth, predicted, class_count)?)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::MeanRecall => "mean_recall",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "mean_recall" | "balanced_accuracy" => Ok(Metric::MeanRecall),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// Fraction of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Unweighted mean of per-class recalls `TP_c / (TP_c + FN_c)`
/// (balanced accuracy). Every true class needs at least one sample.
pub fn mean_recall(cm: &ConfusionMatrix) -> Result<f64> {
    let support = cm.support();
    let missing: Vec<usize> = support
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0)
        .map(|(c, _)| c)
        .collect();
    if !missing.is_empty() {
        return Err(Error::ZeroSupport(missing));
    }
    let c = support.len();
    let sum: f64 = (0..c)
        .map(|k| cm.get(k, k) as f64 / support[k] as f64)
        .sum();
    Ok(sum / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn cm(rows: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix::new(rows).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&cm(vec![vec![3, 0], vec![0, 4]])).unwrap(), 1.0);
        assert_eq!(accuracy(&cm(vec![vec![0, 5], vec![5, 0]])).unwrap(), 0.0);
        assert!(accuracy(&cm(vec![vec![0, 0], vec![0, 0]])).is_err());
    }

    #[test]
    fn accuracy_matches_division_oracle() {
        let mut rng = seed::rng(4);
        for _ in 0..20 {
            let rows: Vec<Vec<u64>> = (0..4)
                .map(|_| (0..4).map(|_| rng.random_range(0..20)).collect())
                .collect();
            let diag: u64 = (0..4).map(|i| rows[i][i]).sum();
            let total: u64 = rows.iter().flatten().sum();
            if total == 0 {
                continue;
            }
            let m = cm(rows);
            assert_eq!(accuracy(&m).unwrap(), diag as f64 / total as f64);
        }
    }

    #[test]
    fn mean_recall_examples() {
        assert_eq!(mean_recall(&cm(vec![vec![2, 0], vec![0, 9]])).unwrap(), 1.0);
        // recalls 1.0 and 0.5
        assert_eq!(mean_recall(&cm(vec![vec![4, 0], vec![3, 3]])).unwrap(), 0.75);
        let eq = cm(vec![vec![3, 1, 1], vec![0, 4, 1], vec![2, 2, 1]]);
        assert!((mean_recall(&eq).unwrap() - accuracy(&eq).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mean_recall_lists_unsupported_classes() {
        let err = mean_recall(&cm(vec![vec![1, 0, 0], vec![0, 0, 0], vec![0, 0, 0]])).unwrap_err();
        match err {
            Error::ZeroSupport(c) => assert_eq!(c, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
