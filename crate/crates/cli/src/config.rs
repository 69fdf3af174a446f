use std::path::Path;

use cellquant::flowseg::SegmentParams;
use cellquant::losses::LossConfig;
use cellquant::metrics::{DEFAULT_IOU_THRESHOLD, DEFAULT_REPLICATES};
use cellquant::preprocess::{SplitFractions, StandardizePolicy};
use cellquant::{Error, Result};
use serde::{Deserialize, Serialize};

/// Seed used whenever neither the config file nor `--seed` sets one.
pub const DEFAULT_SEED: u64 = 42;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "CELLQUANT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub standardize: StandardizePolicy,
    pub segment: SegmentParams,
    pub loss: LossConfig,
    pub evaluate: EvaluateConfig,
    pub split: SplitFractions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            jobs: None,
            standardize: StandardizePolicy::default(),
            segment: SegmentParams::default(),
            loss: LossConfig::default(),
            evaluate: EvaluateConfig::default(),
            split: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub iou_threshold: f64,
    pub bootstrap: u32,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { iou_threshold: DEFAULT_IOU_THRESHOLD, bootstrap: DEFAULT_REPLICATES }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(toml::from_str::<RunConfig>("").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_tables() {
        let c: RunConfig = toml::from_str("seed = 7\n[segment]\nmin_size = 4\n[loss]\nfocal_gamma = 0.0\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.segment.min_size, 4);
        assert_eq!(c.segment.n_iter, 200);
        assert_eq!(c.loss.focal_gamma, 0.0);
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
    }
}
