use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cellquant::flowseg::{ClassMap, InstanceMap};
use cellquant::io::{read_tensor, write_tensor};
use cellquant::losses::{
    combined_seg_loss, finite_difference, focal_loss, kd_loss, relative_error, spectral_decoupling,
    weighted_cross_entropy, LogitLayout, Logits, LossConfig, FD_STEP,
};
use cellquant::metrics::{evaluate as run_evaluate, EvalImage, EvaluateOptions, LabeledInstances};
use cellquant::{Error, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use super::seg::{parse_vocab, ClassesFile};
use crate::output::{emit, read_json, write_json};
use crate::Context;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Directory of predicted `<id>_inst.cqt` with `<id>_classes.json` or `<id>_class.cqt`.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground truth in the same layout.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bootstrap replicates; 0 disables intervals.
    #[arg(long)]
    bootstrap: Option<u32>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Comma-separated class names, background first.
    #[arg(long)]
    vocab: Option<String>,
}

fn image_ids(dir: &Path) -> Result<BTreeSet<String>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = BTreeSet::new();
    for entry in rd {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix("_inst.cqt")) {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

fn load_labeled(dir: &Path, id: &str) -> Result<(LabeledInstances, Option<Vec<String>>)> {
    let map = InstanceMap::from_tensor(&read_tensor(dir.join(format!("{}_inst.cqt", id)))?)?;
    map.validate()?;
    let json_path = dir.join(format!("{}_classes.json", id));
    if json_path.exists() {
        let f: ClassesFile = read_json(&json_path)?;
        return Ok((LabeledInstances::new(map, f.instance_classes)?, f.class_vocabulary));
    }
    let cls_path = dir.join(format!("{}_class.cqt", id));
    if cls_path.exists() {
        let cls = ClassMap::from_tensor(&read_tensor(&cls_path)?)?;
        return Ok((LabeledInstances::from_class_map(map, &cls)?, None));
    }
    Err(Error::InvalidInput(format!("{}: no {}_classes.json or {}_class.cqt", dir.display(), id, id)))
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<()> {
    let pred_ids = image_ids(&a.pred)?;
    let gt_ids = image_ids(&a.gt)?;
    if pred_ids != gt_ids {
        let missing: Vec<&String> = gt_ids.symmetric_difference(&pred_ids).collect();
        return Err(Error::InvalidInput(format!("prediction and ground-truth images differ: {:?}", missing)));
    }
    if gt_ids.is_empty() {
        return Err(Error::InvalidInput(format!("no *_inst.cqt files in {}", a.gt.display())));
    }
    let mut images = Vec::with_capacity(gt_ids.len());
    let mut file_vocab = None;
    for id in &gt_ids {
        let (gt, v) = load_labeled(&a.gt, id)?;
        let (pred, _) = load_labeled(&a.pred, id)?;
        file_vocab = file_vocab.or(v);
        images.push(EvalImage { image_id: id.clone(), pred, gt });
    }
    let vocab = match a.vocab.as_deref().map(parse_vocab).or(file_vocab) {
        Some(v) => v,
        None => {
            let max = images
                .iter()
                .flat_map(|i| i.gt.classes.iter().chain(&i.pred.classes))
                .copied()
                .max()
                .unwrap_or(1)
                .max(1);
            std::iter::once("background".to_string()).chain((1..=max).map(|c| format!("class_{}", c))).collect()
        }
    };
    let opts = EvaluateOptions {
        iou_threshold: a.iou_threshold.unwrap_or(ctx.config.evaluate.iou_threshold),
        n_replicates: a.bootstrap.unwrap_or(ctx.config.evaluate.bootstrap),
        seed: ctx.config.seed,
    };
    let report = run_evaluate(&images, &vocab, &opts)?;
    write_json(&a.out, &report)?;
    let summary = serde_json::to_value(&report)?;
    emit(ctx, &summary, Some(report.to_table()));
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Combined,
    Ce,
    Focal,
    Sd,
    Kd,
}

#[derive(Args)]
pub struct LossEvalArgs {
    /// Logits as an `N×K` or `K×H×W` tensor.
    #[arg(long)]
    logits: PathBuf,
    /// Integer targets: `N` (or `N×1`) for row logits, `H×W` for channel logits.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "combined")]
    kind: LossKind,
    /// Teacher logits for `--kind kd`, same shape as the logits.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Write the gradient as an f64 tensor in the logits' layout.
    #[arg(long)]
    grad_out: Option<PathBuf>,
    /// Compare the analytic gradient with central finite differences.
    #[arg(long)]
    check_grad: bool,
}

/// Largest number of gradient entries probed by `--check-grad`.
const MAX_CHECKED: usize = 512;
const GRAD_TOLERANCE: f64 = 1e-4;

fn targets_map(t: &cellquant::Tensor, layout: LogitLayout, n: usize) -> Result<ClassMap> {
    let ids = t.as_i32().ok_or_else(|| Error::InvalidInput("targets must be an i32 tensor".into()))?.to_vec();
    let (h, w) = match layout {
        LogitLayout::Channels { height, width } => (height, width),
        LogitLayout::Rows => (n, 1),
    };
    if ids.len() != h * w {
        return Err(Error::InvalidInput(format!("{} targets for {} logit rows", ids.len(), n)));
    }
    ClassMap::new(h, w, ids)
}

fn evaluate_loss(
    kind: LossKind,
    z: &Logits,
    cls: &ClassMap,
    teacher: Option<&Logits>,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>, Value)> {
    let targets: Vec<usize> = cls.classes.iter().map(|&c| c as usize).collect();
    cls.validate(z.k)?;
    Ok(match kind {
        LossKind::Combined => {
            let t = combined_seg_loss(z, cls, cfg)?;
            let terms = json!({ "cross_entropy": t.cross_entropy, "focal": t.focal, "spectral_decoupling": t.spectral_decoupling });
            (t.total, t.grad, terms)
        }
        LossKind::Ce => {
            let v = weighted_cross_entropy(z, &targets, &cfg.weights_for(z.k)?)?;
            (v.loss, v.grad, Value::Null)
        }
        LossKind::Focal => {
            let v = focal_loss(z, &targets, cfg.focal_gamma, &cfg.weights_for(z.k)?)?;
            (v.loss, v.grad, Value::Null)
        }
        LossKind::Sd => {
            let v = spectral_decoupling(z, cfg.sd_lambda);
            (v.loss, v.grad, Value::Null)
        }
        LossKind::Kd => {
            let t = teacher.ok_or_else(|| Error::InvalidInput("--kind kd needs --teacher".into()))?;
            let v = kd_loss(z, t, &targets, cfg)?;
            (v.loss, v.grad, Value::Null)
        }
    })
}

pub fn loss_eval(ctx: &Context, a: LossEvalArgs) -> Result<()> {
    let cfg = &ctx.config.loss;
    cfg.validate()?;
    let (z, layout) = Logits::from_tensor(&read_tensor(&a.logits)?)?;
    let cls = targets_map(&read_tensor(&a.targets)?, layout, z.n)?;
    let teacher = match &a.teacher {
        Some(p) => {
            let (t, tl) = Logits::from_tensor(&read_tensor(p)?)?;
            if tl != layout || (t.n, t.k) != (z.n, z.k) {
                return Err(Error::InvalidInput("teacher logits differ in shape from the student logits".into()));
            }
            Some(t)
        }
        None => None,
    };
    let (loss, grad, terms) = evaluate_loss(a.kind, &z, &cls, teacher.as_ref(), cfg)?;
    if let Some(p) = &a.grad_out {
        write_tensor(&Logits::tensor_in_layout(z.k, &grad, layout)?, p)?;
    }
    let mut out = json!({
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "loss": loss,
        "n": z.n,
        "k": z.k,
        "grad_l2": grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        "config": cfg,
        "seed": ctx.config.seed,
    });
    if !terms.is_null() {
        out["terms"] = terms;
    }
    let mut grad_ok = true;
    if a.check_grad {
        let total = z.values.len();
        let picks: Vec<usize> = if total <= MAX_CHECKED {
            (0..total).collect()
        } else {
            (0..MAX_CHECKED).map(|i| i * total / MAX_CHECKED).collect()
        };
        let mut worst = 0.0f64;
        for &i in &picks {
            let f = |x: &[f64]| {
                let mut probe = z.clone();
                probe.values[i] = x[0];
                evaluate_loss(a.kind, &probe, &cls, teacher.as_ref(), cfg).map(|r| r.0).unwrap_or(f64::NAN)
            };
            let numeric = finite_difference(f, &[z.values[i]], FD_STEP)[0];
            worst = worst.max(relative_error(grad[i], numeric));
        }
        grad_ok = worst < GRAD_TOLERANCE;
        out["gradient_check"] = json!({
            "entries_checked": picks.len(),
            "step": FD_STEP,
            "max_relative_error": worst,
            "tolerance": GRAD_TOLERANCE,
            "passed": grad_ok,
        });
    }
    write_json(&a.out, &out)?;
    emit(ctx, &out, None);
    if !grad_ok {
        return Err(Error::Invariant("analytic gradient disagrees with finite differences".into()));
    }
    Ok(())
}
