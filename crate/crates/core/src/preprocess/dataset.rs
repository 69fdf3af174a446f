use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::manifest::CellRecord;

/// Number of cells per class label.
pub fn class_counts(cells: &[CellRecord]) -> BTreeMap<i32, usize> {
    let mut counts = BTreeMap::new();
    for c in cells {
        *counts.entry(c.class_label).or_insert(0) += 1;
    }
    counts
}

fn indices_by_class(cells: &[CellRecord]) -> BTreeMap<i32, Vec<usize>> {
    let mut by_class: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        by_class.entry(c.class_label).or_default().push(i);
    }
    by_class
}

/// Downsample every class, uniformly without replacement, to the size of
/// the least represented class. Selected cells keep their input order.
pub fn class_balance(cells: &[CellRecord], seed: u64) -> Vec<CellRecord> {
    let by_class = indices_by_class(cells);
    let Some(target) = by_class.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; cells.len()];
    for idx in by_class.values() {
        for &i in idx.choose_multiple(&mut rng, target) {
            keep[i] = true;
        }
    }
    cells.iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.70, val: 0.20, test: 0.10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Largest-remainder apportionment of `n` items; ties go train → val → test.
fn apportion(n: usize, f: &SplitFractions) -> [usize; 3] {
    let quotas = [f.train * n as f64, f.val * n as f64, f.test * n as f64];
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        if (ra - rb).abs() < 1e-9 {
            a.cmp(&b)
        } else {
            rb.partial_cmp(&ra).unwrap()
        }
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified train/val/test split. Within each class the cells are
/// shuffled with the seed and apportioned by the largest-remainder method;
/// each output list keeps input order.
pub fn split(cells: &[CellRecord], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    let total = fractions.train + fractions.val + fractions.test;
    if (total - 1.0).abs() > 1e-9 || [fractions.train, fractions.val, fractions.test].iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidInput(format!("split fractions {:?} must be non-negative and sum to 1", fractions)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part = vec![0u8; cells.len()];
    for idx in indices_by_class(cells).values() {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(shuffled.len(), &fractions);
        for (j, &i) in shuffled.iter().enumerate() {
            part[i] = if j < n_train {
                0
            } else if j < n_train + n_val {
                1
            } else {
                2
            };
        }
    }
    let mut out = SplitAssignment { seed, ..Default::default() };
    for (c, p) in cells.iter().zip(part) {
        let list = match p {
            0 => &mut out.train,
            1 => &mut out.val,
            _ => &mut out.test,
        };
        list.push(c.cell_id.clone());
    }
    Ok(out)
}
