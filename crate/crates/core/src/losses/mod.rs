//! Training and distillation objectives over per-pixel logit vectors, each
//! returning the loss value together with its analytic gradient, plus the
//! AdamW update rule and cosine learning-rate annealing.
//!
//! All arithmetic is `f64`. Logits are stored pixel-major: `values[i * k + c]`
//! is the logit of class `c` at pixel `i`.

mod config;
mod gradcheck;
mod objectives;
mod optim;

pub use config::LossConfig;
pub use gradcheck::{finite_difference, max_relative_error, relative_error, FD_STEP};
pub use objectives::{
    class_weights_from_frequency, combined_seg_loss, focal_loss, kd_loss, log_softmax, softmax_t, spectral_decoupling,
    svls_kernel, svls_targets, weighted_cross_entropy, weighted_cross_entropy_soft, LossTerms, LossValue,
};
pub use optim::{adamw_step, cosine_annealing_lr, OptimState};

use crate::error::{Error, Result};
use crate::io::tensor::Tensor;

/// A batch of `n` logit vectors of length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub n: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

/// Axis order of the tensor a [`Logits`] batch was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitLayout {
    /// `N×K`, already pixel-major.
    Rows,
    /// `K×H×W`, channel-major.
    Channels { height: usize, width: usize },
}

impl Logits {
    pub fn new(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || k < 2 {
            return Err(Error::InvalidInput(format!("logits need n ≥ 1 and k ≥ 2, got {}×{}", n, k)));
        }
        if values.len() != n * k {
            return Err(Error::InvalidInput(format!("{} logits for a {}×{} batch", values.len(), n, k)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite logit at flat index {}", i)));
        }
        Ok(Logits { n, k, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Reads an `N×K` or `K×H×W` tensor of any float or integer dtype.
    pub fn from_tensor(t: &Tensor) -> Result<(Self, LogitLayout)> {
        let data = t.data().to_f64();
        match *t.shape() {
            [n, k] => Ok((Logits::new(n, k, data)?, LogitLayout::Rows)),
            [k, h, w] => {
                let n = h * w;
                let mut values = vec![0.0; n * k];
                for c in 0..k {
                    for i in 0..n {
                        values[i * k + c] = data[c * n + i];
                    }
                }
                Ok((Logits::new(n, k, values)?, LogitLayout::Channels { height: h, width: w }))
            }
            _ => Err(Error::InvalidInput(format!("logit tensor must be N×K or K×H×W, got shape {:?}", t.shape()))),
        }
    }

    /// Writes a pixel-major buffer (logits or gradients) back in `layout`.
    pub fn tensor_in_layout(k: usize, values: &[f64], layout: LogitLayout) -> Result<Tensor> {
        let n = values.len() / k;
        match layout {
            LogitLayout::Rows => Tensor::from_f64(vec![n, k], values.to_vec()),
            LogitLayout::Channels { height, width } => {
                let mut out = vec![0.0; values.len()];
                for c in 0..k {
                    for i in 0..n {
                        out[c * n + i] = values[i * k + c];
                    }
                }
                Tensor::from_f64(vec![k, height, width], out)
            }
        }
    }
}
