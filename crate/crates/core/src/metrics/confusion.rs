use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[i][j]`: true class `i` predicted as `j`.
    pub counts: Vec<Vec<u64>>,
    /// Recall of each class; `None` when the class has no true samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Unweighted mean over classes with samples.
    pub average_accuracy: Option<f64>,
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!("{} true labels but {} predictions", truth.len(), predicted.len())));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidInput(format!("label pair ({}, {}) outside {} classes", t, p, n_classes)));
        }
        counts[t][p] += 1;
    }
    let per_class_accuracy: Vec<Option<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    let average_accuracy = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(ConfusionMatrix { counts, per_class_accuracy, average_accuracy })
}
