use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::io::tensor::Tensor;

const PROB_SUM_TOL: f32 = 1e-5;

/// Per-pixel instance ids; 0 is background, instances are `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<i32>,
}

impl InstanceMap {
    pub fn new(height: usize, width: usize, labels: Vec<i32>) -> Result<Self> {
        check_len(height, width, labels.len())?;
        Ok(InstanceMap { height, width, labels })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        InstanceMap { height, width, labels: vec![0; height * width] }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, v) = grid_i32(t, "instance map")?;
        InstanceMap::new(h, w, v)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_i32(vec![self.height, self.width], self.labels.clone()).expect("shape matches buffer")
    }

    /// Largest instance id (`K` for a valid map).
    pub fn num_instances(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0).max(0) as usize
    }

    /// Pixel count of every id `0..=K`.
    pub fn areas(&self) -> Vec<u64> {
        let mut a = vec![0u64; self.num_instances() + 1];
        for &l in &self.labels {
            if l > 0 {
                a[l as usize] += 1;
            }
        }
        a
    }

    /// Check that ids are exactly `{0} ∪ {1..K}` and that every instance is
    /// 4-connected.
    pub fn validate(&self) -> Result<()> {
        if let Some(&neg) = self.labels.iter().find(|&&l| l < 0) {
            return Err(Error::Invariant(format!("negative instance id {}", neg)));
        }
        let areas = self.areas();
        if let Some(missing) = (1..areas.len()).find(|&k| areas[k] == 0) {
            return Err(Error::Invariant(format!("instance ids are not contiguous: {} is missing", missing)));
        }
        let (h, w) = (self.height, self.width);
        let mut seen_component = vec![false; areas.len()];
        let mut visited = vec![false; h * w];
        let mut queue = VecDeque::new();
        for start in 0..h * w {
            let l = self.labels[start];
            if l == 0 || visited[start] {
                continue;
            }
            if seen_component[l as usize] {
                return Err(Error::Invariant(format!("instance {} is not 4-connected", l)));
            }
            seen_component[l as usize] = true;
            visited[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let (y, x) = (i / w, i % w);
                for n in neighbors4(y, x, h, w) {
                    if !visited[n] && self.labels[n] == l {
                        visited[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn neighbors4(y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let up = (y > 0).then(|| (y - 1) * w + x);
    let down = (y + 1 < h).then(|| (y + 1) * w + x);
    let left = (x > 0).then(|| y * w + x - 1);
    let right = (x + 1 < w).then(|| y * w + x + 1);
    [up, left, right, down].into_iter().flatten()
}

/// Per-pixel class ids; 0 is background, `1..=C` are cell classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<i32>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize, classes: Vec<i32>) -> Result<Self> {
        check_len(height, width, classes.len())?;
        Ok(ClassMap { height, width, classes })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, v) = grid_i32(t, "class map")?;
        ClassMap::new(h, w, v)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_i32(vec![self.height, self.width], self.classes.clone()).expect("shape matches buffer")
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        match self.classes.iter().find(|&&c| c < 0 || c as usize > n_classes) {
            Some(c) => Err(Error::Invariant(format!("class id {} outside [0, {}]", c, n_classes))),
            None => Ok(()),
        }
    }
}

/// Vertical (`dy`) and horizontal (`dx`) flow components.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub dy: Vec<f32>,
    pub dx: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, dy: Vec<f32>, dx: Vec<f32>) -> Result<Self> {
        check_len(height, width, dy.len())?;
        check_len(height, width, dx.len())?;
        Ok(FlowField { height, width, dy, dx })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { height, width, dy: vec![0.0; height * width], dx: vec![0.0; height * width] }
    }

    /// Read a `2×H×W` f32 tensor, channel 0 = dy, channel 1 = dx.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let data = t.as_f32().ok_or_else(|| Error::InvalidInput("flow field must be f32".into()))?;
        match *t.shape() {
            [2, h, w] => {
                let f = FlowField::new(h, w, data[..h * w].to_vec(), data[h * w..].to_vec())?;
                f.validate()?;
                Ok(f)
            }
            ref s => Err(Error::InvalidInput(format!("flow field must be 2×H×W, got {:?}", s))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let mut data = self.dy.clone();
        data.extend_from_slice(&self.dx);
        Tensor::from_f32(vec![2, self.height, self.width], data).expect("shape matches buffer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dy.iter().chain(&self.dx).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("flow field contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Per-pixel class probabilities, `(C+1)×H×W`, channel 0 = background.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub probs: Vec<f32>,
}

impl ProbMap {
    pub fn new(channels: usize, height: usize, width: usize, probs: Vec<f32>) -> Result<Self> {
        if channels < 2 {
            return Err(Error::InvalidInput("probability map needs background plus at least one class".into()));
        }
        if probs.len() != channels * height * width {
            return Err(Error::InvalidInput(format!(
                "probability buffer has {} values, expected {}×{}×{}",
                probs.len(),
                channels,
                height,
                width
            )));
        }
        Ok(ProbMap { channels, height, width, probs })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let data = t.as_f32().ok_or_else(|| Error::InvalidInput("probability map must be f32".into()))?;
        match *t.shape() {
            [c, h, w] => {
                let p = ProbMap::new(c, h, w, data.to_vec())?;
                p.validate()?;
                Ok(p)
            }
            ref s => Err(Error::InvalidInput(format!("probability map must be (C+1)×H×W, got {:?}", s))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![self.channels, self.height, self.width], self.probs.clone())
            .expect("shape matches buffer")
    }

    /// One-hot probabilities from a class map (synthetic network output).
    pub fn one_hot(classes: &ClassMap, n_classes: usize) -> Result<Self> {
        classes.validate(n_classes)?;
        let n = classes.height * classes.width;
        let mut probs = vec![0f32; (n_classes + 1) * n];
        for (i, &c) in classes.classes.iter().enumerate() {
            probs[c as usize * n + i] = 1.0;
        }
        ProbMap::new(n_classes + 1, classes.height, classes.width, probs)
    }

    pub fn n_classes(&self) -> usize {
        self.channels - 1
    }

    #[inline]
    pub fn get(&self, channel: usize, pixel: usize) -> f32 {
        self.probs[channel * self.height * self.width + pixel]
    }

    /// Values in `[0,1]` and per-pixel sums within `1 ± 1e-5`.
    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        if let Some(v) = self.probs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invariant(format!("probability {} outside [0,1]", v)));
        }
        for i in 0..n {
            let s: f32 = (0..self.channels).map(|c| self.get(c, i)).sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::Invariant(format!(
                    "probabilities at pixel ({}, {}) sum to {}",
                    i / self.width,
                    i % self.width,
                    s
                )));
            }
        }
        Ok(())
    }
}

fn check_len(h: usize, w: usize, len: usize) -> Result<()> {
    if h == 0 || w == 0 || h * w != len {
        return Err(Error::InvalidInput(format!("buffer of {} values does not fit {}×{}", len, h, w)));
    }
    Ok(())
}

fn grid_i32(t: &Tensor, what: &str) -> Result<(usize, usize, Vec<i32>)> {
    let data = t.as_i32().ok_or_else(|| Error::InvalidInput(format!("{} must be i32", what)))?;
    match *t.shape() {
        [h, w] => Ok((h, w, data.to_vec())),
        [1, h, w] => Ok((h, w, data.to_vec())),
        ref s => Err(Error::InvalidInput(format!("{} must be H×W, got {:?}", what, s))),
    }
}
