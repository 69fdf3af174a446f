use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bootstrap::bootstrap_ci;
use super::confusion::{confusion_matrix, ConfusionMatrix};
use super::counts::{count_cells, r_squared};
use super::matching::{
    match_any_class, match_instances, LabeledInstances, MatchResult, PqScores, DEFAULT_IOU_THRESHOLD,
};
use super::DEFAULT_REPLICATES;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "cellquant.metric_report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub iou_threshold: f64,
    /// Zero disables confidence intervals.
    pub n_replicates: u32,
    pub seed: u64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions { iou_threshold: DEFAULT_IOU_THRESHOLD, n_replicates: DEFAULT_REPLICATES, seed: 0 }
    }
}

/// A point estimate with an optional bootstrap interval. `value` is `None`
/// when the metric is undefined on the full data; `note` then carries the
/// reason code.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: i32,
    pub class_name: String,
    pub n_gt: u64,
    pub n_pred: u64,
    pub r2: MetricValue,
    pub pq: MetricValue,
    pub sq: MetricValue,
    pub dq: MetricValue,
    pub accuracy: MetricValue,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub r2: Option<f64>,
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub dq: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub schema_version: u32,
    pub engine_version: String,
    pub seed: u64,
    pub n_replicates: u32,
    pub iou_threshold: f64,
    pub n_images: usize,
    pub n_instances_gt: u64,
    pub n_instances_pred: u64,
    pub classes: Vec<ClassMetrics>,
    /// Unweighted means over classes where the metric is defined.
    pub average: Averages,
    /// Cell typing over detected cells, indexed by `class_id - 1`.
    pub confusion: ConfusionMatrix,
}

/// One predicted/ground-truth pair of labeled instance maps.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub image_id: String,
    pub pred: LabeledInstances,
    pub gt: LabeledInstances,
}

struct Summary {
    gt_counts: Vec<u64>,
    pred_counts: Vec<u64>,
    matched: MatchResult,
    /// (gt class, pred class) of each class-agnostic match.
    typed: Vec<(i32, i32)>,
}

fn summarize(img: &EvalImage, n_classes: usize, thr: f64) -> Result<Summary> {
    let gt_counts = count_cells(&img.gt.map, &img.gt.classes, n_classes)?;
    let pred_counts = count_cells(&img.pred.map, &img.pred.classes, n_classes)?;
    let matched = match_instances(&img.pred, &img.gt, thr)?;
    let typed = match_any_class(&img.pred, &img.gt, thr)?
        .pairs
        .iter()
        .map(|p| (img.gt.class_of(p.gt), img.pred.class_of(p.pred)))
        .collect();
    Ok(Summary { gt_counts, pred_counts, matched, typed })
}

fn pooled_pq(set: &[&Summary], class: i32) -> PqScores {
    let results: Vec<MatchResult> = set.iter().map(|s| s.matched.clone()).collect();
    super::matching::dataset_pq(&results, class)
}

fn pooled_accuracy(set: &[&Summary], class: i32) -> Option<f64> {
    let (mut hit, mut total) = (0u64, 0u64);
    for s in set {
        for &(g, p) in &s.typed {
            if g == class {
                total += 1;
                hit += (p == class) as u64;
            }
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

fn pooled_r2(set: &[&Summary], class: i32) -> std::result::Result<f64, Error> {
    let k = class as usize - 1;
    let y: Vec<f64> = set.iter().map(|s| s.gt_counts[k] as f64).collect();
    let yhat: Vec<f64> = set.iter().map(|s| s.pred_counts[k] as f64).collect();
    r_squared(&y, &yhat)
}

fn with_ci<F>(
    summaries: &[Summary],
    opts: &EvaluateOptions,
    stream: u64,
    value: Option<f64>,
    note: Option<String>,
    stat: F,
) -> MetricValue
where
    F: Fn(&[&Summary]) -> Option<f64> + Sync,
{
    let mut mv = MetricValue { value, note, ..Default::default() };
    if value.is_none() || opts.n_replicates == 0 {
        return mv;
    }
    let refs: Vec<&Summary> = summaries.iter().collect();
    // one independent seed per (class, metric) so intervals do not share draws
    let seed = opts.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    match bootstrap_ci(&refs, |r| stat(r), opts.n_replicates, seed) {
        Ok(ci) => {
            mv.ci_low = Some(ci.lo);
            mv.ci_high = Some(ci.hi);
        }
        Err(e) => {
            let reason = e.to_string();
            mv.note = Some(match mv.note.take() {
                Some(n) => format!("{}; {}", n, reason),
                None => reason,
            });
        }
    }
    mv
}

/// Computes per-class R², PQ/SQ/DQ and typing accuracy over a set of
/// images, with percentile bootstrap intervals obtained by resampling
/// images. `class_names[c]` names class `c`; index 0 is background.
pub fn evaluate(images: &[EvalImage], class_names: &[String], opts: &EvaluateOptions) -> Result<MetricReport> {
    if images.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one image".into()));
    }
    if class_names.len() < 2 {
        return Err(Error::InvalidInput("class vocabulary needs background and at least one class".into()));
    }
    let n_classes = class_names.len();
    let summaries: Vec<Summary> =
        images.iter().map(|i| summarize(i, n_classes, opts.iou_threshold)).collect::<Result<_>>()?;
    let all: Vec<&Summary> = summaries.iter().collect();

    let mut classes = Vec::with_capacity(n_classes - 1);
    for c in 1..n_classes as i32 {
        let stream = c as u64 * 8;
        let k = c as usize - 1;
        let (r2_value, r2_note) = match pooled_r2(&all, c) {
            Ok(v) => (Some(v), None),
            Err(Error::Undefined { code, .. }) => (None, Some(code.to_string())),
            Err(e) => (None, Some(e.to_string())),
        };
        let r2 = with_ci(&summaries, opts, stream, r2_value, r2_note, |s| pooled_r2(s, c).ok());

        let pq_all = pooled_pq(&all, c);
        let undefined = (!pq_all.is_defined()).then(|| "NO_INSTANCES".to_string());
        let sq_note = (pq_all.tp == 0).then(|| "SQ_ZERO_TP".to_string()).or_else(|| undefined.clone());
        let pq =
            with_ci(&summaries, opts, stream + 1, Some(pq_all.pq), undefined.clone(), |s| Some(pooled_pq(s, c).pq));
        let sq = with_ci(&summaries, opts, stream + 2, Some(pq_all.sq), sq_note, |s| Some(pooled_pq(s, c).sq));
        let dq = with_ci(&summaries, opts, stream + 3, Some(pq_all.dq), undefined, |s| Some(pooled_pq(s, c).dq));

        let acc_value = pooled_accuracy(&all, c);
        let acc_note = acc_value.is_none().then(|| "NO_MATCHED_CELLS".to_string());
        let accuracy = with_ci(&summaries, opts, stream + 4, acc_value, acc_note, |s| pooled_accuracy(s, c));

        classes.push(ClassMetrics {
            class_id: c,
            class_name: class_names[c as usize].clone(),
            n_gt: summaries.iter().map(|s| s.gt_counts[k]).sum(),
            n_pred: summaries.iter().map(|s| s.pred_counts[k]).sum(),
            r2,
            pq,
            sq,
            dq,
            accuracy,
            tp: pq_all.tp,
            fp: pq_all.fp,
            fn_: pq_all.fn_,
        });
    }

    let mean_of = |f: &dyn Fn(&ClassMetrics) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = classes.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let defined = |m: &ClassMetrics| m.tp + m.fp + m.fn_ > 0;
    let average = Averages {
        r2: mean_of(&|m| m.r2.value),
        pq: mean_of(&|m| if defined(m) { m.pq.value } else { None }),
        sq: mean_of(&|m| if defined(m) { m.sq.value } else { None }),
        dq: mean_of(&|m| if defined(m) { m.dq.value } else { None }),
        accuracy: mean_of(&|m| m.accuracy.value),
    };

    let (truth, predicted): (Vec<usize>, Vec<usize>) = summaries
        .iter()
        .flat_map(|s| s.typed.iter())
        .filter(|(g, p)| *g > 0 && *p > 0)
        .map(|&(g, p)| (g as usize - 1, p as usize - 1))
        .unzip();
    let confusion = confusion_matrix(&truth, &predicted, n_classes - 1)?;

    Ok(MetricReport {
        schema: REPORT_SCHEMA.to_string(),
        schema_version: REPORT_SCHEMA_VERSION,
        engine_version: crate::ENGINE_VERSION.to_string(),
        seed: opts.seed,
        n_replicates: opts.n_replicates,
        iou_threshold: opts.iou_threshold,
        n_images: images.len(),
        n_instances_gt: classes.iter().map(|c| c.n_gt).sum(),
        n_instances_pred: classes.iter().map(|c| c.n_pred).sum(),
        classes,
        average,
        confusion,
    })
}

fn cell(m: &MetricValue) -> String {
    match (m.value, m.ci_low, m.ci_high) {
        (Some(v), Some(lo), Some(hi)) => format!("{:.3} ({:.3}–{:.3})", v, lo, hi),
        (Some(v), _, _) => format!("{:.3}", v),
        _ => "n/a".to_string(),
    }
}

impl MetricReport {
    /// Human-readable table: one row per class, `value (lo–hi)` cells.
    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 6]> = self
            .classes
            .iter()
            .map(|c| [c.class_name.clone(), cell(&c.r2), cell(&c.pq), cell(&c.sq), cell(&c.dq), cell(&c.accuracy)])
            .collect();
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.3}", x));
        let avg = [
            "Average".to_string(),
            opt(self.average.r2),
            opt(self.average.pq),
            opt(self.average.sq),
            opt(self.average.dq),
            opt(self.average.accuracy),
        ];
        let header = ["Class", "R2", "PQ", "SQ", "DQ", "Accuracy"].map(String::from);
        let all: Vec<&[String; 6]> = std::iter::once(&header).chain(rows.iter()).chain(std::iter::once(&avg)).collect();
        let widths: Vec<usize> = (0..6).map(|j| all.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, r) in all.iter().enumerate() {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, &w)| format!("{:<w$}", s, w = w)).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 || i == rows.len() {
                let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            }
        }
        let _ = writeln!(
            out,
            "images: {}  gt instances: {}  predicted instances: {}  replicates: {}  seed: {}",
            self.n_images, self.n_instances_gt, self.n_instances_pred, self.n_replicates, self.seed
        );
        out
    }
}
