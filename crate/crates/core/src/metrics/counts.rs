use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flowseg::InstanceMap;

/// Cells per class. `classes[k-1]` is the class of instance `k`; the result
/// has `n_classes` entries, index `c-1` for class `c`.
pub fn count_cells(inst: &InstanceMap, classes: &[i32], n_classes: usize) -> Result<Vec<u64>> {
    let k = inst.num_instances();
    if classes.len() != k {
        return Err(Error::InvalidInput(format!("{} instance classes for {} instances", classes.len(), k)));
    }
    let areas = inst.areas();
    let mut counts = vec![0u64; n_classes];
    for (i, &c) in classes.iter().enumerate() {
        if areas[i + 1] == 0 {
            continue;
        }
        if c < 1 || c as usize > n_classes {
            return Err(Error::InvalidInput(format!("instance {} has class {} outside 1..={}", i + 1, c, n_classes)));
        }
        counts[c as usize - 1] += 1;
    }
    Ok(counts)
}

/// Coefficient of determination `1 - Σ(y-ŷ)² / Σ(y-ȳ)²`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::InvalidInput(format!("{} actual counts but {} predicted", actual.len(), predicted.len())));
    }
    let n = actual.len();
    if n < 2 {
        return Err(Error::InvalidInput("R² needs at least two observations".into()));
    }
    let mean = actual.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined { code: "R2_ZERO_VARIANCE", message: "actual counts have zero variance".into() });
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Actual and predicted per-class counts for a set of images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountVector {
    pub image_ids: Vec<String>,
    pub actual: BTreeMap<i32, Vec<f64>>,
    pub predicted: BTreeMap<i32, Vec<f64>>,
}

impl CountVector {
    /// Append one image's counts (`counts[c-1]` for class `c`).
    pub fn push(&mut self, image_id: impl Into<String>, actual: &[u64], predicted: &[u64]) {
        let n = self.image_ids.len();
        self.image_ids.push(image_id.into());
        for (store, counts) in [(&mut self.actual, actual), (&mut self.predicted, predicted)] {
            for (i, &v) in counts.iter().enumerate() {
                store.entry(i as i32 + 1).or_insert_with(|| vec![0.0; n]).push(v as f64);
            }
            for v in store.values_mut() {
                v.resize(n + 1, 0.0);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn r_squared(&self, class: i32) -> Result<f64> {
        let empty = vec![0.0; self.len()];
        let y = self.actual.get(&class).unwrap_or(&empty);
        let p = self.predicted.get(&class).unwrap_or(&empty);
        r_squared(y, p)
    }
}
