use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_REPLICATES: u32 = 1000;
const LOWER_PERCENTILE: f64 = 2.5;
const UPPER_PERCENTILE: f64 = 97.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub replicates_used: u32,
    pub replicates_skipped: u32,
}

/// Linear-interpolation percentile of sorted data (`q` in `[0, 100]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Nonparametric percentile bootstrap: resample with replacement
/// `n_replicates` times, evaluate `statistic` on each replicate and return
/// the empirical 2.5th and 97.5th percentiles.
///
/// Replicate `r` draws from a ChaCha stream keyed by `(seed, r)`, so the
/// result does not depend on scheduling. Replicates where the statistic is
/// undefined (`None`) are skipped; more than half skipped is an error.
pub fn bootstrap_ci<T, F>(samples: &[T], statistic: F, n_replicates: u32, seed: u64) -> Result<Interval>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Option<f64> + Sync,
{
    if samples.is_empty() {
        return Err(Error::InvalidInput("bootstrap needs at least one sample".into()));
    }
    if n_replicates == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    let n = samples.len();
    let values: Vec<Option<f64>> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let replicate: Vec<T> = (0..n).map(|_| samples[rng.random_range(0..n)].clone()).collect();
            statistic(&replicate).filter(|v| v.is_finite())
        })
        .collect();
    let mut used: Vec<f64> = values.into_iter().flatten().collect();
    let skipped = n_replicates - used.len() as u32;
    if used.is_empty() || skipped as u64 * 2 > n_replicates as u64 {
        return Err(Error::Undefined {
            code: "BOOTSTRAP_UNDEFINED",
            message: format!("statistic undefined on {} of {} replicates", skipped, n_replicates),
        });
    }
    used.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Interval {
        lo: percentile(&used, LOWER_PERCENTILE),
        hi: percentile(&used, UPPER_PERCENTILE),
        replicates_used: used.len() as u32,
        replicates_skipped: skipped,
    })
}
