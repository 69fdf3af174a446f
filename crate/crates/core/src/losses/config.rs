use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss hyperparameters. Absent fields take the defaults below, so a TOML
/// table only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Per-class focal coefficients; empty means all ones.
    pub class_weights: Vec<f64>,
    pub focal_gamma: f64,
    pub sd_lambda: f64,
    pub svls_kernel_size: u32,
    pub svls_sigma: f64,
    /// Smooth the cross-entropy targets; when false the hard labels are used.
    pub svls: bool,
    pub ce_weight: f64,
    pub focal_weight: f64,
    pub kd_temperature: f64,
    pub kd_alpha: f64,
    pub kd_beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            class_weights: Vec::new(),
            focal_gamma: 2.0,
            sd_lambda: 0.01,
            svls_kernel_size: 3,
            svls_sigma: 1.0,
            svls: true,
            ce_weight: 1.0,
            focal_weight: 1.0,
            kd_temperature: 14.0,
            kd_alpha: 0.3,
            kd_beta: 0.7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("class weights must be finite and non-negative".into());
        }
        if !(self.focal_gamma >= 0.0) {
            return bad(format!("focal_gamma must be ≥ 0, got {}", self.focal_gamma));
        }
        if !(self.sd_lambda >= 0.0) {
            return bad(format!("sd_lambda must be ≥ 0, got {}", self.sd_lambda));
        }
        if self.svls_kernel_size % 2 == 0 {
            return bad(format!("svls_kernel_size must be odd, got {}", self.svls_kernel_size));
        }
        if !(self.svls_sigma > 0.0) {
            return bad(format!("svls_sigma must be > 0, got {}", self.svls_sigma));
        }
        if !(self.kd_temperature >= 1.0) {
            return bad(format!("kd_temperature must be ≥ 1, got {}", self.kd_temperature));
        }
        if !(self.kd_alpha >= 0.0 && self.kd_beta >= 0.0) {
            return bad("kd_alpha and kd_beta must be ≥ 0".into());
        }
        if !(self.ce_weight >= 0.0 && self.focal_weight >= 0.0) {
            return bad("term weights must be ≥ 0".into());
        }
        Ok(())
    }

    /// Class weights resolved for `k` classes.
    pub fn weights_for(&self, k: usize) -> Result<Vec<f64>> {
        if self.class_weights.is_empty() {
            return Ok(vec![1.0; k]);
        }
        if self.class_weights.len() != k {
            return Err(Error::InvalidInput(format!("{} class weights for {} classes", self.class_weights.len(), k)));
        }
        Ok(self.class_weights.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_uses_defaults() {
        let c: LossConfig = toml::from_str("focal_gamma = 1.5\nclass_weights = [0.5, 1.5]").unwrap();
        assert_eq!(c.focal_gamma, 1.5);
        assert_eq!(c.kd_temperature, 14.0);
        assert_eq!(c.weights_for(2).unwrap(), vec![0.5, 1.5]);
        assert!(c.weights_for(3).is_err());
        c.validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        for c in [
            LossConfig { svls_kernel_size: 4, ..Default::default() },
            LossConfig { kd_temperature: 0.5, ..Default::default() },
            LossConfig { focal_gamma: -1.0, ..Default::default() },
            LossConfig { kd_alpha: -0.1, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
        assert!(toml::from_str::<LossConfig>("gamma = 2").is_err());
    }
}
