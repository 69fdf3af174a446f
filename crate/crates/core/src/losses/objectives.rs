use serde::{Deserialize, Serialize};

use super::{Logits, LossConfig};
use crate::error::{Error, Result};
use crate::flowseg::ClassMap;
use crate::preprocess::reflect_index;

/// A scalar loss and its gradient with respect to the logits, laid out
/// like [`Logits::values`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Each weighted term of the segmentation objective and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cross_entropy: f64,
    pub focal: f64,
    pub spectral_decoupling: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Softmax of `z / t`.
pub fn softmax_t(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - max) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_targets(z: &Logits, targets: &[usize]) -> Result<()> {
    if targets.len() != z.n {
        return Err(Error::InvalidInput(format!("{} targets for {} logit rows", targets.len(), z.n)));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= z.k) {
        return Err(Error::InvalidInput(format!("target class {} outside {} classes", t, z.k)));
    }
    Ok(())
}

fn check_weights(z: &Logits, weights: &[f64]) -> Result<()> {
    if weights.len() != z.k {
        return Err(Error::InvalidInput(format!("{} class weights for {} classes", weights.len(), z.k)));
    }
    Ok(())
}

/// Mean over rows of `−w_y·log p_y`.
pub fn weighted_cross_entropy(z: &Logits, targets: &[usize], weights: &[f64]) -> Result<LossValue> {
    check_targets(z, targets)?;
    check_weights(z, weights)?;
    let n = z.n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.values.len()];
    for (i, &t) in targets.iter().enumerate() {
        let lp = log_softmax(z.row(i));
        let w = weights[t];
        loss -= w * lp[t];
        let g = &mut grad[i * z.k..(i + 1) * z.k];
        for c in 0..z.k {
            g[c] = w * (lp[c].exp() - (c == t) as u8 as f64) / n;
        }
    }
    Ok(LossValue { loss: loss / n, grad })
}

/// Mean over rows of `−Σ_c w_c·t_c·log p_c` for soft targets `t` laid out
/// like the logits.
pub fn weighted_cross_entropy_soft(z: &Logits, soft: &[f64], weights: &[f64]) -> Result<LossValue> {
    if soft.len() != z.values.len() {
        return Err(Error::InvalidInput(format!("{} soft targets for {} logits", soft.len(), z.values.len())));
    }
    check_weights(z, weights)?;
    let n = z.n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.values.len()];
    for i in 0..z.n {
        let lp = log_softmax(z.row(i));
        let t = &soft[i * z.k..(i + 1) * z.k];
        let mass: f64 = (0..z.k).map(|c| weights[c] * t[c]).sum();
        for c in 0..z.k {
            loss -= weights[c] * t[c] * lp[c];
            grad[i * z.k + c] = (mass * lp[c].exp() - weights[c] * t[c]) / n;
        }
    }
    Ok(LossValue { loss: loss / n, grad })
}

/// Mean over rows of `−α_t·(1 − p_t)^γ·log p_t` with `α = weights`.
pub fn focal_loss(z: &Logits, targets: &[usize], gamma: f64, weights: &[f64]) -> Result<LossValue> {
    check_targets(z, targets)?;
    check_weights(z, weights)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("focal gamma must be ≥ 0, got {}", gamma)));
    }
    let n = z.n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; z.values.len()];
    for (i, &t) in targets.iter().enumerate() {
        let lp = log_softmax(z.row(i));
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        // summing the other classes keeps 1 − p_t accurate when p_t ≈ 1
        let q: f64 = p.iter().enumerate().filter(|&(c, _)| c != t).map(|(_, v)| v).sum();
        let a = weights[t];
        let mod_factor = q.powf(gamma);
        loss -= a * mod_factor * lp[t];
        let slope = if gamma == 0.0 || q == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * p[t] * lp[t] };
        let coef = a * (slope - mod_factor);
        let g = &mut grad[i * z.k..(i + 1) * z.k];
        for c in 0..z.k {
            g[c] = coef * ((c == t) as u8 as f64 - p[c]) / n;
        }
    }
    Ok(LossValue { loss: loss / n, grad })
}

/// `(λ/2)·mean ‖z_i‖²`.
pub fn spectral_decoupling(z: &Logits, lambda: f64) -> LossValue {
    let n = z.n as f64;
    let sq: f64 = z.values.iter().map(|v| v * v).sum();
    LossValue { loss: 0.5 * lambda * sq / n, grad: z.values.iter().map(|v| lambda * v / n).collect() }
}

/// Normalized `size × size` Gaussian kernel, row-major.
pub fn svls_kernel(size: u32, sigma: f64) -> Result<Vec<f64>> {
    if size % 2 == 0 {
        return Err(Error::InvalidInput(format!("kernel size must be odd, got {}", size)));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("kernel sigma must be > 0, got {}", sigma)));
    }
    let r = (size / 2) as i64;
    let mut k: Vec<f64> = Vec::with_capacity((size * size) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            k.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = k.iter().sum();
    Ok(k.into_iter().map(|v| v / s).collect())
}

/// Spatially smoothed soft targets: the Gaussian-weighted average of the
/// one-hot labels in each pixel's neighborhood, mirror-reflected at the
/// borders. Output is pixel-major with `n_classes` entries per pixel.
pub fn svls_targets(hard: &ClassMap, n_classes: usize, size: u32, sigma: f64) -> Result<Vec<f64>> {
    hard.validate(n_classes)?;
    let kernel = svls_kernel(size, sigma)?;
    let (h, w) = (hard.height, hard.width);
    let r = (size / 2) as i64;
    let side = size as usize;
    let mut out = vec![0.0; h * w * n_classes];
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * n_classes..(y * w + x + 1) * n_classes];
            for dy in -r..=r {
                let yy = reflect_index(y as i64 + dy, h);
                for dx in -r..=r {
                    let xx = reflect_index(x as i64 + dx, w);
                    let kw = kernel[(dy + r) as usize * side + (dx + r) as usize];
                    o[hard.classes[yy * w + xx] as usize] += kw;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse instance frequency normalized so the weights of observed classes
/// average 1. Classes never observed get weight 0.
pub fn class_weights_from_frequency(counts: &[u64]) -> Vec<f64> {
    let inv: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return inv;
    }
    let mean = inv.iter().sum::<f64>() / present as f64;
    inv.into_iter().map(|v| v / mean).collect()
}

/// Distillation objective
/// `α·T²·mean KL(softmax(z_t/T) ‖ softmax(z_s/T)) + β·CE(z_s, y)`, where
/// the cross-entropy uses `cfg.class_weights`. The gradient is taken with
/// respect to the student logits only.
pub fn kd_loss(student: &Logits, teacher: &Logits, targets: &[usize], cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    if (student.n, student.k) != (teacher.n, teacher.k) {
        return Err(Error::InvalidInput(format!(
            "student logits are {}×{} but teacher logits are {}×{}",
            student.n, student.k, teacher.n, teacher.k
        )));
    }
    let weights = cfg.weights_for(student.k)?;
    let ce = weighted_cross_entropy(student, targets, &weights)?;
    let t = cfg.kd_temperature;
    let n = student.n as f64;
    let mut kl = 0.0;
    let mut grad: Vec<f64> = ce.grad.iter().map(|g| cfg.kd_beta * g).collect();
    for i in 0..student.n {
        let zs: Vec<f64> = student.row(i).iter().map(|v| v / t).collect();
        let zt: Vec<f64> = teacher.row(i).iter().map(|v| v / t).collect();
        let ls = log_softmax(&zs);
        let lt = log_softmax(&zt);
        for c in 0..student.k {
            let q = lt[c].exp();
            if q > 0.0 {
                kl += q * (lt[c] - ls[c]);
            }
            grad[i * student.k + c] += cfg.kd_alpha * t * (ls[c].exp() - q) / n;
        }
    }
    let loss = cfg.kd_alpha * t * t * kl / n + cfg.kd_beta * ce.loss;
    Ok(LossValue { loss, grad })
}

/// `ce_weight·CE(z, targets') + focal_weight·focal(z, targets) + SD(z)`,
/// where `targets'` are the smoothed targets when `cfg.svls` is set. The
/// cross-entropy term is unweighted; class weights enter through the
/// focal term.
pub fn combined_seg_loss(z: &Logits, classes: &ClassMap, cfg: &LossConfig) -> Result<LossTerms> {
    cfg.validate()?;
    if classes.height * classes.width != z.n {
        return Err(Error::InvalidInput(format!(
            "{}×{} class map for {} logit rows",
            classes.height, classes.width, z.n
        )));
    }
    classes.validate(z.k)?;
    let targets: Vec<usize> = classes.classes.iter().map(|&c| c as usize).collect();
    let unit = vec![1.0; z.k];
    let ce = if cfg.svls {
        let soft = svls_targets(classes, z.k, cfg.svls_kernel_size, cfg.svls_sigma)?;
        weighted_cross_entropy_soft(z, &soft, &unit)?
    } else {
        weighted_cross_entropy(z, &targets, &unit)?
    };
    let focal = focal_loss(z, &targets, cfg.focal_gamma, &cfg.weights_for(z.k)?)?;
    let sd = spectral_decoupling(z, cfg.sd_lambda);
    let grad = (0..z.values.len())
        .map(|i| cfg.ce_weight * ce.grad[i] + cfg.focal_weight * focal.grad[i] + sd.grad[i])
        .collect();
    let (c, f, s) = (cfg.ce_weight * ce.loss, cfg.focal_weight * focal.loss, sd.loss);
    Ok(LossTerms { cross_entropy: c, focal: f, spectral_decoupling: s, total: c + f + s, grad })
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{finite_difference, max_relative_error, FD_STEP};
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(seed: u64, n: usize, k: usize) -> (Logits, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = (0..n).map(|_| rng.random_range(0..k)).collect();
        (Logits::new(n, k, v).unwrap(), t)
    }

    fn fd_of(z: &Logits, f: impl Fn(&Logits) -> f64) -> Vec<f64> {
        finite_difference(|x| f(&Logits { n: z.n, k: z.k, values: x.to_vec() }), &z.values, FD_STEP)
    }

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(softmax_t(&[0.0, 0.0], 3.0), vec![0.5, 0.5]);
        let p = softmax_t(&[1f64.ln(), 3f64.ln()], 1.0);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let u = softmax_t(&[5.0, -3.0, 12.0, 0.5], 1e6);
        assert!(u.iter().all(|v| (v - 0.25).abs() < 1e-5));
        let big = softmax_t(&[1000.0, 0.0, -1000.0], 1.0);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_limits() {
        let z = Logits::new(2, 2, vec![30.0, -30.0, -30.0, 30.0]).unwrap();
        assert!(weighted_cross_entropy(&z, &[0, 1], &[1.0, 1.0]).unwrap().loss < 1e-9);
        let u = Logits::new(3, 2, vec![0.0; 6]).unwrap();
        let l = weighted_cross_entropy(&u, &[0, 1, 1], &[1.0, 1.0]).unwrap().loss;
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_gradient() {
        for seed in 0..20 {
            let (z, t) = random_batch(seed, 6, 4);
            let w = [0.5, 1.0, 2.0, 0.7];
            let a = weighted_cross_entropy(&z, &t, &w).unwrap().grad;
            let n = fd_of(&z, |x| weighted_cross_entropy(x, &t, &w).unwrap().loss);
            assert!(max_relative_error(&a, &n) < 1e-6);
        }
    }

    #[test]
    fn soft_targets_match_hard_for_one_hot() {
        let (z, t) = random_batch(3, 5, 3);
        let mut soft = vec![0.0; 15];
        for (i, &c) in t.iter().enumerate() {
            soft[i * 3 + c] = 1.0;
        }
        let w = [1.5, 0.5, 1.0];
        let a = weighted_cross_entropy(&z, &t, &w).unwrap();
        let b = weighted_cross_entropy_soft(&z, &soft, &w).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-14);
        assert!(max_relative_error(&a.grad, &b.grad) < 1e-12);
    }

    #[test]
    fn focal_values() {
        let sat = Logits::new(1, 2, vec![40.0, -40.0]).unwrap();
        assert!(focal_loss(&sat, &[0], 2.0, &[1.0, 1.0]).unwrap().loss < 1e-12);
        let half = Logits::new(1, 2, vec![0.0, 0.0]).unwrap();
        let l = focal_loss(&half, &[1], 2.0, &[1.0, 1.0]).unwrap().loss;
        assert!((l - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.17329).abs() < 1e-5);
    }

    #[test]
    fn focal_gamma_zero_is_cross_entropy() {
        for seed in 0..20 {
            let (z, t) = random_batch(seed, 7, 5);
            let w = [0.3, 1.0, 2.0, 1.1, 0.9];
            let f = focal_loss(&z, &t, 0.0, &w).unwrap();
            let c = weighted_cross_entropy(&z, &t, &w).unwrap();
            assert!((f.loss - c.loss).abs() <= 1e-12);
            assert!(f.grad.iter().zip(&c.grad).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }

    #[test]
    fn focal_gradient() {
        for (seed, gamma) in [(0, 2.0), (1, 0.5), (2, 1.0), (3, 3.7)] {
            let (z, t) = random_batch(seed, 6, 3);
            let w = [1.0, 0.4, 2.5];
            let a = focal_loss(&z, &t, gamma, &w).unwrap().grad;
            let n = fd_of(&z, |x| focal_loss(x, &t, gamma, &w).unwrap().loss);
            assert!(max_relative_error(&a, &n) < 1e-6, "gamma {}", gamma);
        }
    }

    #[test]
    fn spectral_decoupling_values() {
        let z = Logits::new(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(spectral_decoupling(&z, 1.0).loss, 12.5);
        assert_eq!(spectral_decoupling(&Logits::new(2, 2, vec![0.0; 4]).unwrap(), 1.0).loss, 0.0);
        let (r, _) = random_batch(9, 5, 3);
        let a = spectral_decoupling(&r, 0.3).grad;
        let n = fd_of(&r, |x| spectral_decoupling(x, 0.3).loss);
        assert!(max_relative_error(&a, &n) < 1e-8);
    }

    #[test]
    fn svls_kernel_and_targets() {
        let k = svls_kernel(3, 1.0).unwrap();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(svls_kernel(4, 1.0).is_err());

        let uniform = ClassMap::new(5, 5, vec![2; 25]).unwrap();
        let t = svls_targets(&uniform, 3, 3, 1.0).unwrap();
        assert_eq!(&t[12 * 3..12 * 3 + 2], &[0.0, 0.0]);
        assert!((t[12 * 3 + 2] - 1.0).abs() < 1e-15);

        // one off-class pixel to the right of the center of a 3×3 map
        let mut cls = vec![1; 9];
        cls[5] = 0;
        let t = svls_targets(&ClassMap::new(3, 3, cls).unwrap(), 2, 3, 1.0).unwrap();
        let g = (-0.5f64).exp();
        let total = 1.0 + 4.0 * g + 4.0 * (-1.0f64).exp();
        let w_neighbor = g / total;
        assert!((t[4 * 2 + 1] - (1.0 - w_neighbor)).abs() < 1e-15);
        assert!((t[4 * 2] - w_neighbor).abs() < 1e-15);
    }

    #[test]
    fn frequency_weights() {
        let w = class_weights_from_frequency(&[100, 50, 0, 25]);
        assert_eq!(w[2], 0.0);
        let present = [w[0], w[1], w[3]];
        assert!((present.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-15);
        assert!((w[3] / w[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn kd_reductions() {
        let (z, t) = random_batch(4, 6, 4);
        let self_kd = LossConfig { kd_alpha: 1.0, kd_beta: 0.0, kd_temperature: 7.0, ..Default::default() };
        let v = kd_loss(&z, &z, &t, &self_kd).unwrap();
        assert!(v.loss.abs() < 1e-15);
        assert!(v.grad.iter().all(|g| g.abs() < 1e-15));

        let (teacher, _) = random_batch(5, 6, 4);
        let ce_only =
            LossConfig { kd_alpha: 0.0, kd_beta: 1.0, class_weights: vec![1.0, 2.0, 0.5, 1.0], ..Default::default() };
        let a = kd_loss(&z, &teacher, &t, &ce_only).unwrap();
        let b = weighted_cross_entropy(&z, &t, &ce_only.class_weights).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grad, b.grad);
    }

    /// Direct transcription of the formula with explicit exponentials.
    fn naive_kd(zs: &Logits, zt: &Logits, y: &[usize], t: f64, alpha: f64, beta: f64) -> f64 {
        let mut kl = 0.0;
        let mut ce = 0.0;
        for i in 0..zs.n {
            let es: Vec<f64> = zs.row(i).iter().map(|v| (v / t).exp()).collect();
            let et: Vec<f64> = zt.row(i).iter().map(|v| (v / t).exp()).collect();
            let (ss, st): (f64, f64) = (es.iter().sum(), et.iter().sum());
            for c in 0..zs.k {
                let (p, q) = (es[c] / ss, et[c] / st);
                kl += q * (q / p).ln();
            }
            let e: Vec<f64> = zs.row(i).iter().map(|v| v.exp()).collect();
            ce -= (e[y[i]] / e.iter().sum::<f64>()).ln();
        }
        let n = zs.n as f64;
        alpha * t * t * kl / n + beta * ce / n
    }

    #[test]
    fn kd_reference_configuration() {
        let cfg = LossConfig::default();
        assert_eq!((cfg.kd_temperature, cfg.kd_alpha, cfg.kd_beta), (14.0, 0.3, 0.7));
        for seed in 0..10 {
            let (zs, y) = random_batch(100 + seed, 8, 5);
            let (zt, _) = random_batch(200 + seed, 8, 5);
            let v = kd_loss(&zs, &zt, &y, &cfg).unwrap();
            assert!((v.loss - naive_kd(&zs, &zt, &y, 14.0, 0.3, 0.7)).abs() < 1e-10);
            let n = fd_of(&zs, |x| kd_loss(x, &zt, &y, &cfg).unwrap().loss);
            assert!(max_relative_error(&v.grad, &n) < 1e-6);
        }
    }

    #[test]
    fn kd_frozen_reference() {
        // evaluated with torch: F.kl_div(log_softmax(zs/14), softmax(zt/14),
        // reduction="batchmean") * 0.3 * 196 + 0.7 * F.cross_entropy(zs, y)
        let zs = Logits::new(2, 3, vec![1.0, -0.5, 2.0, 0.3, 0.8, -1.2]).unwrap();
        let zt = Logits::new(2, 3, vec![2.5, 0.1, -0.7, -1.0, 1.5, 0.4]).unwrap();
        let v = kd_loss(&zs, &zt, &[2, 1], &LossConfig::default()).unwrap();
        assert!((v.loss - KD_FROZEN_LOSS).abs() < 1e-10, "{:.17}", v.loss);
        for (a, b) in v.grad.iter().zip(KD_FROZEN_GRAD) {
            assert!((a - b).abs() < 1e-10, "{:?}", v.grad);
        }
    }

    const KD_FROZEN_LOSS: f64 = 0.6741233155700226;
    const KD_FROZEN_GRAD: [f64; 6] = [
        -0.0007271700189042801,
        -0.01609067292053111,
        0.016817842939435168,
        0.20120170400475473,
        -0.16810808986102546,
        -0.03309361414372913,
    ];

    #[test]
    fn combined_terms() {
        let (z, _) = random_batch(6, 20, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cm = ClassMap::new(4, 5, (0..20).map(|_| rng.random_range(0..3)).collect()).unwrap();
        let cfg = LossConfig { class_weights: vec![0.5, 1.2, 1.3], ..Default::default() };
        let r = combined_seg_loss(&z, &cm, &cfg).unwrap();
        assert!((r.cross_entropy + r.focal + r.spectral_decoupling - r.total).abs() <= 1e-12);
        let n = fd_of(&z, |x| combined_seg_loss(x, &cm, &cfg).unwrap().total);
        assert!(max_relative_error(&r.grad, &n) < 1e-6);

        let ce_only = LossConfig { focal_weight: 0.0, sd_lambda: 0.0, svls: false, ..Default::default() };
        let r = combined_seg_loss(&z, &cm, &ce_only).unwrap();
        let t: Vec<usize> = cm.classes.iter().map(|&c| c as usize).collect();
        let ce = weighted_cross_entropy(&z, &t, &[1.0; 3]).unwrap();
        assert_eq!(r.total, ce.loss);
        assert_eq!(r.grad, ce.grad);
    }

    proptest! {
        #[test]
        fn probabilities_normalized(z in prop::collection::vec(-50.0f64..50.0, 2..9), t in 1.0f64..30.0) {
            prop_assert!((softmax_t(&z, t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let lp = log_softmax(&z);
            prop_assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn svls_rows_sum_to_one(h in 1usize..6, w in 1usize..6, seed in 0u64..500, size in prop::sample::select(vec![1u32, 3, 5])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cm = ClassMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..4)).collect()).unwrap();
            let t = svls_targets(&cm, 4, size, 1.0).unwrap();
            for row in t.chunks(4) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn self_distillation_is_zero(seed in 0u64..1000, t in 1.0f64..20.0) {
            let (z, y) = random_batch(seed, 4, 3);
            let cfg = LossConfig { kd_alpha: 1.0, kd_beta: 0.0, kd_temperature: t, ..Default::default() };
            prop_assert!(kd_loss(&z, &z, &y, &cfg).unwrap().loss.abs() < 1e-13);
        }
    }
}
