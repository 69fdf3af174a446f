use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowseg::maps::{neighbors4, FlowField, InstanceMap, ProbMap};

/// Post-processing hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub prob_threshold: f32,
    pub n_iter: u32,
    pub step: f32,
    pub cluster_radius: f32,
    pub min_size: u32,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams { prob_threshold: 0.5, n_iter: 200, step: 1.0, cluster_radius: 2.0, min_size: 15 }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return Err(Error::InvalidInput(format!("prob_threshold {} outside (0,1)", self.prob_threshold)));
        }
        if self.n_iter == 0 {
            return Err(Error::InvalidInput("n_iter must be at least 1".into()));
        }
        if self.min_size == 0 {
            return Err(Error::InvalidInput("min_size must be at least 1".into()));
        }
        if !(self.cluster_radius > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidInput("cluster_radius must be positive and step finite".into()));
        }
        Ok(())
    }
}

/// Final `(y, x)` position of every pixel after flow following.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    pub height: usize,
    pub width: usize,
    pub ys: Vec<f32>,
    pub xs: Vec<f32>,
}

/// Synthetic flows: unit vectors from each foreground pixel toward its
/// instance centroid, zero at the centroid itself and on background.
pub fn flows_from_instances(inst: &InstanceMap) -> FlowField {
    let (h, w) = (inst.height, inst.width);
    let k = inst.num_instances();
    let mut sums = vec![(0f64, 0f64, 0u64); k + 1];
    for (i, &l) in inst.labels.iter().enumerate() {
        if l > 0 {
            let s = &mut sums[l as usize];
            s.0 += (i / w) as f64;
            s.1 += (i % w) as f64;
            s.2 += 1;
        }
    }
    let centroids: Vec<(f64, f64)> =
        sums.iter().map(|&(sy, sx, n)| if n > 0 { (sy / n as f64, sx / n as f64) } else { (0.0, 0.0) }).collect();
    let mut flows = FlowField::zeros(h, w);
    for (i, &l) in inst.labels.iter().enumerate() {
        if l <= 0 {
            continue;
        }
        let (cy, cx) = centroids[l as usize];
        let vy = cy - (i / w) as f64;
        let vx = cx - (i % w) as f64;
        let norm = (vy * vy + vx * vx).sqrt();
        if norm > 0.0 {
            flows.dy[i] = (vy / norm) as f32;
            flows.dx[i] = (vx / norm) as f32;
        }
    }
    flows
}

#[inline]
fn bilinear(flows: &FlowField, y: f32, x: f32) -> (f32, f32) {
    let (h, w) = (flows.height, flows.width);
    let y0 = (y.floor() as usize).min(h - 1);
    let x0 = (x.floor() as usize).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f32;
    let fx = x - x0 as f32;
    let at = |v: &[f32], yy: usize, xx: usize| v[yy * w + xx];
    let lerp = |v: &[f32]| {
        let top = at(v, y0, x0) * (1.0 - fx) + at(v, y0, x1) * fx;
        let bottom = at(v, y1, x0) * (1.0 - fx) + at(v, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    (lerp(&flows.dy), lerp(&flows.dx))
}

/// Euler integration of every foreground pixel along the bilinearly sampled
/// flow field, positions clamped to the image. Background pixels stay put.
pub fn follow_flows(flows: &FlowField, foreground: &[bool], params: &SegmentParams) -> Result<Positions> {
    let (h, w) = (flows.height, flows.width);
    if foreground.len() != h * w {
        return Err(Error::InvalidInput("foreground mask does not match flow field shape".into()));
    }
    flows.validate()?;
    let (ymax, xmax) = ((h - 1) as f32, (w - 1) as f32);
    let step = params.step;
    let n_iter = params.n_iter;
    let final_pos: Vec<(f32, f32)> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (mut y, mut x) = ((i / w) as f32, (i % w) as f32);
            if foreground[i] {
                for _ in 0..n_iter {
                    let (vy, vx) = bilinear(flows, y, x);
                    y = (y + step * vy).clamp(0.0, ymax);
                    x = (x + step * vx).clamp(0.0, xmax);
                }
            }
            (y, x)
        })
        .collect();
    let (ys, xs) = final_pos.into_iter().unzip();
    Ok(Positions { height: h, width: w, ys, xs })
}

/// Group converged pixels into instances.
///
/// Final positions are binned on a grid of cell size `cluster_radius`;
/// occupied bins joined by 8-connectivity form sinks. Pixels sharing a sink
/// are split into 4-connected components, components smaller than
/// `min_size` are dropped, and ids are assigned `1..K` in raster order of
/// first occurrence.
pub fn cluster_converged(positions: &Positions, foreground: &[bool], params: &SegmentParams) -> Result<InstanceMap> {
    let (h, w) = (positions.height, positions.width);
    if foreground.len() != h * w || positions.ys.len() != h * w || positions.xs.len() != h * w {
        return Err(Error::InvalidInput("positions and foreground mask disagree in shape".into()));
    }
    let r = params.cluster_radius;
    let bh = ((h - 1) as f32 / r).floor() as usize + 1;
    let bw = ((w - 1) as f32 / r).floor() as usize + 1;
    let bin_of = |i: usize| {
        let by = ((positions.ys[i] / r).floor().max(0.0) as usize).min(bh - 1);
        let bx = ((positions.xs[i] / r).floor().max(0.0) as usize).min(bw - 1);
        by * bw + bx
    };

    const UNSET: u32 = u32::MAX;
    let mut bins = vec![UNSET; bh * bw];
    let mut occupied = vec![false; bh * bw];
    for i in 0..h * w {
        if foreground[i] {
            occupied[bin_of(i)] = true;
        }
    }
    let mut n_sinks = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..bh * bw {
        if !occupied[start] || bins[start] != UNSET {
            continue;
        }
        bins[start] = n_sinks;
        queue.push_back(start);
        while let Some(b) = queue.pop_front() {
            let (by, bx) = ((b / bw) as i64, (b % bw) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (ny, nx) = (by + dy, bx + dx);
                    if ny < 0 || nx < 0 || ny >= bh as i64 || nx >= bw as i64 {
                        continue;
                    }
                    let n = ny as usize * bw + nx as usize;
                    if occupied[n] && bins[n] == UNSET {
                        bins[n] = n_sinks;
                        queue.push_back(n);
                    }
                }
            }
        }
        n_sinks += 1;
    }

    let sink: Vec<u32> = (0..h * w).map(|i| if foreground[i] { bins[bin_of(i)] } else { UNSET }).collect();

    // split sinks into 4-connected pieces, raster order of first pixel
    let mut labels = vec![0i32; h * w];
    let mut piece = vec![UNSET; h * w];
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    for start in 0..h * w {
        if sink[start] == UNSET || piece[start] != UNSET {
            continue;
        }
        let id = pieces.len() as u32;
        let mut members = vec![start];
        piece[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for n in neighbors4(i / w, i % w, h, w) {
                if piece[n] == UNSET && sink[n] == sink[start] {
                    piece[n] = id;
                    members.push(n);
                }
            }
        }
        pieces.push(members);
    }
    let mut next = 1i32;
    for members in pieces.iter().filter(|m| m.len() >= params.min_size as usize) {
        for &i in members {
            labels[i] = next;
        }
        next += 1;
    }
    InstanceMap::new(h, w, labels)
}

/// Full post-processing path from network maps to an instance map.
pub fn segment(flows: &FlowField, probs: &ProbMap, params: &SegmentParams) -> Result<InstanceMap> {
    params.validate()?;
    if flows.height != probs.height || flows.width != probs.width {
        return Err(Error::InvalidInput(format!(
            "flow field is {}×{} but probability map is {}×{}",
            flows.height, flows.width, probs.height, probs.width
        )));
    }
    let n = flows.height * flows.width;
    let foreground: Vec<bool> = (0..n).map(|i| 1.0 - probs.get(0, i) > params.prob_threshold).collect();
    let positions = follow_flows(flows, &foreground, params)?;
    cluster_converged(&positions, &foreground, params)
}
