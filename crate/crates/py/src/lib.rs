//! Python bindings for the cellquant engine.
//!
//! Arrays cross the boundary as flat row-major lists together with their
//! shape. The bindings are thin: every function forwards to the core crate.

use cellquant::error::{Error, ErrorKind};
use cellquant::flowseg::{self, ClassMap, FlowField, InstanceMap, ProbMap, SegmentParams};
use cellquant::io::manifest::{BBox, CellRecord};
use cellquant::losses::{self, Logits, LossConfig, OptimState};
use cellquant::metrics::{self, LabeledInstances};
use cellquant::preprocess::{self, SplitFractions};
use cellquant::{Tensor, TensorData};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Io => PyOSError::new_err(e.to_string()),
        ErrorKind::InvalidInput => PyValueError::new_err(e.to_string()),
        ErrorKind::Invariant => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for cellquant::error::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Reads a CQT1 tensor. Returns `(shape, dtype, values)`.
#[pyfunction]
fn read_tensor(py: Python<'_>, path: &str) -> PyResult<(Vec<usize>, String, Py<PyAny>)> {
    let t = cellquant::io::read_tensor(path).py_err()?;
    let shape = t.shape().to_vec();
    let dtype = format!("{:?}", t.dtype()).to_lowercase();
    let values = match t.into_data() {
        TensorData::U8(v) => v.into_pyobject(py)?.into_any().unbind(),
        TensorData::I32(v) => v.into_pyobject(py)?.into_any().unbind(),
        TensorData::F32(v) => v.into_pyobject(py)?.into_any().unbind(),
        TensorData::F64(v) => v.into_pyobject(py)?.into_any().unbind(),
    };
    Ok((shape, dtype, values))
}

/// Writes a CQT1 tensor. `dtype` is one of `u8`, `i32`, `f32`, `f64`.
#[pyfunction]
fn write_tensor(path: &str, shape: Vec<usize>, dtype: &str, values: &Bound<'_, PyAny>) -> PyResult<()> {
    let t = match dtype {
        "u8" => Tensor::from_u8(shape, values.extract()?),
        "i32" => Tensor::from_i32(shape, values.extract()?),
        "f32" => Tensor::from_f32(shape, values.extract()?),
        "f64" => Tensor::from_f64(shape, values.extract()?),
        other => return Err(PyValueError::new_err(format!("unknown dtype {}", other))),
    }
    .py_err()?;
    cellquant::io::write_tensor(&t, path).py_err()
}

/// Flow field of an instance map. Returns `(dy, dx)`.
#[pyfunction]
fn flows_from_instances(height: usize, width: usize, labels: Vec<i32>) -> PyResult<(Vec<f32>, Vec<f32>)> {
    let inst = InstanceMap::new(height, width, labels).py_err()?;
    inst.validate().py_err()?;
    let f = flowseg::flows_from_instances(&inst);
    Ok((f.dy, f.dx))
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (height, width, dy, dx, channels, probs, prob_threshold=0.5, n_iter=200, step=1.0, cluster_radius=2.0, min_size=15))]
fn segment(
    height: usize,
    width: usize,
    dy: Vec<f32>,
    dx: Vec<f32>,
    channels: usize,
    probs: Vec<f32>,
    prob_threshold: f32,
    n_iter: u32,
    step: f32,
    cluster_radius: f32,
    min_size: u32,
) -> PyResult<Vec<i32>> {
    let flows = FlowField::new(height, width, dy, dx).py_err()?;
    let probs = ProbMap::new(channels, height, width, probs).py_err()?;
    probs.validate().py_err()?;
    let params = SegmentParams { prob_threshold, n_iter, step, cluster_radius, min_size };
    Ok(flowseg::segment(&flows, &probs, &params).py_err()?.labels)
}

/// Majority class per instance, indexed by instance id minus one.
#[pyfunction]
fn majority_vote(
    height: usize,
    width: usize,
    labels: Vec<i32>,
    channels: usize,
    probs: Vec<f32>,
) -> PyResult<Vec<i32>> {
    let inst = InstanceMap::new(height, width, labels).py_err()?;
    let probs = ProbMap::new(channels, height, width, probs).py_err()?;
    probs.validate().py_err()?;
    Ok(flowseg::majority_vote(&inst, &probs).py_err()?.1)
}

fn labeled(height: usize, width: usize, labels: Vec<i32>, classes: Vec<i32>) -> PyResult<LabeledInstances> {
    LabeledInstances::new(InstanceMap::new(height, width, labels).py_err()?, classes).py_err()
}

/// Panoptic quality of one class for a single image pair.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (height, width, pred_labels, pred_classes, gt_labels, gt_classes, class_id, iou_threshold=0.5))]
fn panoptic_quality<'py>(
    py: Python<'py>,
    height: usize,
    width: usize,
    pred_labels: Vec<i32>,
    pred_classes: Vec<i32>,
    gt_labels: Vec<i32>,
    gt_classes: Vec<i32>,
    class_id: i32,
    iou_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let pred = labeled(height, width, pred_labels, pred_classes)?;
    let gt = labeled(height, width, gt_labels, gt_classes)?;
    let m = metrics::match_instances(&pred, &gt, iou_threshold).py_err()?;
    let s = metrics::pq_sq_dq(&m, class_id);
    let d = PyDict::new(py);
    d.set_item("pq", s.pq)?;
    d.set_item("sq", s.sq)?;
    d.set_item("dq", s.dq)?;
    d.set_item("tp", s.tp)?;
    d.set_item("fp", s.fp)?;
    d.set_item("fn", s.fn_)?;
    d.set_item("iou_sum", s.iou_sum)?;
    Ok(d)
}

#[pyfunction]
fn r_squared(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::r_squared(&actual, &predicted).py_err()
}

/// Percentile interval of the sample mean. Returns `(lo, hi)`.
#[pyfunction]
#[pyo3(signature = (samples, n_replicates=1000, seed=0))]
fn bootstrap_mean_ci(samples: Vec<f64>, n_replicates: u32, seed: u64) -> PyResult<(f64, f64)> {
    let ci = metrics::bootstrap_ci(
        &samples,
        |s: &[f64]| if s.is_empty() { None } else { Some(s.iter().sum::<f64>() / s.len() as f64) },
        n_replicates,
        seed,
    )
    .py_err()?;
    Ok((ci.lo, ci.hi))
}

fn logits(n: usize, k: usize, values: Vec<f64>) -> PyResult<Logits> {
    Logits::new(n, k, values).py_err()
}

fn unit_or(weights: Option<Vec<f64>>, k: usize) -> Vec<f64> {
    weights.unwrap_or_else(|| vec![1.0; k])
}

/// Weighted cross-entropy. Returns `(loss, grad)`.
#[pyfunction]
#[pyo3(signature = (n, k, z, targets, weights=None))]
fn cross_entropy(
    n: usize,
    k: usize,
    z: Vec<f64>,
    targets: Vec<usize>,
    weights: Option<Vec<f64>>,
) -> PyResult<(f64, Vec<f64>)> {
    let v = losses::weighted_cross_entropy(&logits(n, k, z)?, &targets, &unit_or(weights, k)).py_err()?;
    Ok((v.loss, v.grad))
}

#[pyfunction]
#[pyo3(signature = (n, k, z, targets, gamma=2.0, weights=None))]
fn focal_loss(
    n: usize,
    k: usize,
    z: Vec<f64>,
    targets: Vec<usize>,
    gamma: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<(f64, Vec<f64>)> {
    let v = losses::focal_loss(&logits(n, k, z)?, &targets, gamma, &unit_or(weights, k)).py_err()?;
    Ok((v.loss, v.grad))
}

#[pyfunction]
#[pyo3(signature = (n, k, z, lam=0.01))]
fn spectral_decoupling(n: usize, k: usize, z: Vec<f64>, lam: f64) -> PyResult<(f64, Vec<f64>)> {
    let v = losses::spectral_decoupling(&logits(n, k, z)?, lam);
    Ok((v.loss, v.grad))
}

/// Distillation loss. The gradient is with respect to the student logits.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (n, k, student, teacher, targets, temperature=14.0, alpha=0.3, beta=0.7, weights=None))]
fn kd_loss(
    n: usize,
    k: usize,
    student: Vec<f64>,
    teacher: Vec<f64>,
    targets: Vec<usize>,
    temperature: f64,
    alpha: f64,
    beta: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<(f64, Vec<f64>)> {
    let cfg = LossConfig {
        kd_temperature: temperature,
        kd_alpha: alpha,
        kd_beta: beta,
        class_weights: weights.unwrap_or_default(),
        ..LossConfig::default()
    };
    let v = losses::kd_loss(&logits(n, k, student)?, &logits(n, k, teacher)?, &targets, &cfg).py_err()?;
    Ok((v.loss, v.grad))
}

#[pyfunction]
fn class_weights_from_frequency(counts: Vec<u64>) -> Vec<f64> {
    losses::class_weights_from_frequency(&counts)
}

#[pyclass]
struct AdamW {
    state: OptimState,
}

#[pymethods]
impl AdamW {
    #[new]
    #[pyo3(signature = (n_params, lr=1e-3, weight_decay=0.01))]
    fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW { state: OptimState::new(n_params, lr, weight_decay) }
    }

    #[getter]
    fn lr(&self) -> f64 {
        self.state.lr
    }

    #[setter]
    fn set_lr(&mut self, lr: f64) {
        self.state.lr = lr;
    }

    /// Applies one update and returns the new parameters.
    fn step(&mut self, params: Vec<f64>, grads: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut p = params;
        losses::adamw_step(&mut p, &grads, &mut self.state).py_err()?;
        Ok(p)
    }
}

#[pyfunction]
fn cosine_annealing_lr(step: u64, total_steps: u64, lr_min: f64, lr_max: f64) -> f64 {
    losses::cosine_annealing_lr(step, total_steps, lr_min, lr_max)
}

fn records(labels: &[i32]) -> Vec<CellRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| CellRecord {
            cell_id: i.to_string(),
            source_patch_id: i.to_string(),
            instance_id: 1,
            bbox: BBox { x0: 0, y0: 0, x1: 1, y1: 1 },
            class_label: l,
            relabel_provenance: None,
        })
        .collect()
}

fn indices(ids: &[String]) -> Vec<usize> {
    ids.iter().map(|s| s.parse().unwrap()).collect()
}

/// Undersamples to the rarest class. Returns the kept indices.
#[pyfunction]
#[pyo3(signature = (labels, seed=0))]
fn class_balance(labels: Vec<i32>, seed: u64) -> Vec<usize> {
    let kept = preprocess::class_balance(&records(&labels), seed);
    let ids: Vec<String> = kept.into_iter().map(|c| c.cell_id).collect();
    indices(&ids)
}

/// Stratified split. Returns `(train, val, test)` index lists.
#[pyfunction]
#[pyo3(signature = (labels, train=0.7, val=0.15, test=0.15, seed=0))]
fn split(
    labels: Vec<i32>,
    train: f64,
    val: f64,
    test: f64,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let s = preprocess::split(&records(&labels), SplitFractions { train, val, test }, seed).py_err()?;
    Ok((indices(&s.train), indices(&s.val), indices(&s.test)))
}

/// Per-pixel class map from an instance map and per-instance classes.
#[pyfunction]
fn paint_classes(height: usize, width: usize, labels: Vec<i32>, instance_classes: Vec<i32>) -> PyResult<Vec<i32>> {
    let l = labeled(height, width, labels, instance_classes)?;
    let classes = l.map.labels.iter().map(|&id| if id > 0 { l.classes[id as usize - 1] } else { 0 }).collect();
    Ok(ClassMap::new(height, width, classes).py_err()?.classes)
}

#[pymodule]
fn _cellquant(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cellquant::ENGINE_VERSION)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(flows_from_instances, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(paint_classes, m)?)?;
    m.add_function(wrap_pyfunction!(panoptic_quality, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_mean_ci, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_decoupling, m)?)?;
    m.add_function(wrap_pyfunction!(kd_loss, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights_from_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_annealing_lr, m)?)?;
    m.add_function(wrap_pyfunction!(class_balance, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_class::<AdamW>()?;
    Ok(())
}
