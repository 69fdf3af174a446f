use crate::error::{Error, Result};
use crate::io::tensor::{Tensor, TensorData};

/// Cubic convolution coefficient (Catmull-Rom).
pub const CUBIC_A: f64 = -0.5;

/// Height, width and channel count of an `H×W` or `H×W×C` tensor.
pub(crate) fn hwc(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::InvalidInput(format!("expected an H×W or H×W×C image, got shape {:?}", s))),
    }
}

fn with_hw(t: &Tensor, h: usize, w: usize) -> Vec<usize> {
    let mut s = t.shape().to_vec();
    s[0] = h;
    s[1] = w;
    s
}

/// Reflect-101 index folding: `-1 → 1`, `n → n-2`, repeated until in range.
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as i64;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Sample a `rows × cols` window whose top-left corner is at `(top, left)`
/// in source coordinates, resolving out-of-range pixels by reflection.
pub(crate) fn reflect_window(img: &Tensor, top: i64, left: i64, rows: usize, cols: usize) -> Result<Tensor> {
    let (h, w, c) = hwc(img)?;
    fn gather<T: Copy>(
        src: &[T],
        h: usize,
        w: usize,
        c: usize,
        top: i64,
        left: i64,
        rows: usize,
        cols: usize,
    ) -> Vec<T> {
        let col_idx: Vec<usize> = (0..cols).map(|x| reflect_index(left + x as i64, w)).collect();
        let mut out = Vec::with_capacity(rows * cols * c);
        for y in 0..rows {
            let sy = reflect_index(top + y as i64, h);
            let row = &src[sy * w * c..(sy + 1) * w * c];
            for &sx in &col_idx {
                out.extend_from_slice(&row[sx * c..(sx + 1) * c]);
            }
        }
        out
    }
    let data = match img.data() {
        TensorData::U8(v) => TensorData::U8(gather(v, h, w, c, top, left, rows, cols)),
        TensorData::I32(v) => TensorData::I32(gather(v, h, w, c, top, left, rows, cols)),
        TensorData::F32(v) => TensorData::F32(gather(v, h, w, c, top, left, rows, cols)),
        TensorData::F64(v) => TensorData::F64(gather(v, h, w, c, top, left, rows, cols)),
    };
    Tensor::new(with_hw(img, rows, cols), data)
}

/// Reflection padding without edge duplication: `[1,2,3]` padded left by 2
/// becomes `[3,2,1,2,3]`. Each pad width must be smaller than the
/// corresponding dimension.
pub fn mirror_pad(img: &Tensor, left: u32, right: u32, top: u32, bottom: u32) -> Result<Tensor> {
    let (h, w, _) = hwc(img)?;
    if left as usize >= w || right as usize >= w || top as usize >= h || bottom as usize >= h {
        return Err(Error::InvalidInput(format!(
            "pad widths (l={}, r={}, t={}, b={}) must be smaller than the image dimensions {}×{}",
            left, right, top, bottom, h, w
        )));
    }
    reflect_window(
        img,
        -(top as i64),
        -(left as i64),
        h + top as usize + bottom as usize,
        w + left as usize + right as usize,
    )
}

/// Keys' cubic convolution kernel.
pub fn cubic_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-coordinate taps: four clamped source indices and weights.
fn taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as i64;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            for k in 0..4 {
                let off = k as i64 - 1;
                idx[k] = (base + off).clamp(0, n_in as i64 - 1) as usize;
                wts[k] = cubic_kernel(t - off as f64, CUBIC_A);
            }
            (idx, wts)
        })
        .collect()
}

/// Separable bicubic resize with half-pixel centers and edge clamping.
/// Integer outputs are rounded half away from zero and saturated.
pub fn bicubic_resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidInput("output dimensions must be positive".into()));
    }
    let (h, w, c) = hwc(img)?;
    let src = img.data().to_f64();

    let col_taps = taps(w, out_w);
    let mut horiz = vec![0f64; h * out_w * c];
    for y in 0..h {
        for (x, (idx, wts)) in col_taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wts[k] * src[(y * w + idx[k]) * c + ch];
                }
                horiz[(y * out_w + x) * c + ch] = acc;
            }
        }
    }

    let row_taps = taps(h, out_h);
    let mut out = vec![0f64; out_h * out_w * c];
    for (y, (idx, wts)) in row_taps.iter().enumerate() {
        for x in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wts[k] * horiz[(idx[k] * out_w + x) * c + ch];
                }
                out[(y * out_w + x) * c + ch] = acc;
            }
        }
    }

    let data = match img.data() {
        TensorData::U8(_) => TensorData::U8(out.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()),
        TensorData::I32(_) => {
            TensorData::I32(out.iter().map(|&v| v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32).collect())
        }
        TensorData::F32(_) => TensorData::F32(out.iter().map(|&v| v as f32).collect()),
        TensorData::F64(_) => TensorData::F64(out),
    };
    Tensor::new(with_hw(img, out_h, out_w), data)
}
