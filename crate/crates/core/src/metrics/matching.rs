use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowseg::{ClassMap, InstanceMap};

/// IoU a pair must exceed to match; at 0.5 or above matches are unique.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// An instance map together with the class of each instance
/// (`classes[k-1]` for instance `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstances {
    pub map: InstanceMap,
    pub classes: Vec<i32>,
}

impl LabeledInstances {
    pub fn new(map: InstanceMap, classes: Vec<i32>) -> Result<Self> {
        if classes.len() != map.num_instances() {
            return Err(Error::InvalidInput(format!(
                "{} classes for {} instances",
                classes.len(),
                map.num_instances()
            )));
        }
        Ok(LabeledInstances { map, classes })
    }

    /// Class of each instance from a class map: most frequent non-background
    /// value among its pixels, lower id on ties, 0 if none.
    pub fn from_class_map(map: InstanceMap, cls: &ClassMap) -> Result<Self> {
        if (map.height, map.width) != (cls.height, cls.width) {
            return Err(Error::InvalidInput("instance and class maps differ in shape".into()));
        }
        let mut votes: Vec<BTreeMap<i32, u64>> = vec![BTreeMap::new(); map.num_instances() + 1];
        for (&l, &c) in map.labels.iter().zip(&cls.classes) {
            if l > 0 && c > 0 {
                *votes[l as usize].entry(c).or_insert(0) += 1;
            }
        }
        let classes = votes[1..]
            .iter()
            .map(|v| v.iter().fold((0, 0), |best, (&c, &n)| if n > best.1 { (c, n) } else { best }).0)
            .collect();
        Ok(LabeledInstances { map, classes })
    }

    pub fn class_of(&self, id: u32) -> i32 {
        self.classes.get(id as usize - 1).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: u32,
    pub gt: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatch {
    /// Sorted by `(gt, pred)`.
    pub pairs: Vec<MatchedPair>,
    pub false_positives: u64,
    pub false_negatives: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub per_class: BTreeMap<i32, ClassMatch>,
}

impl MatchResult {
    pub fn class(&self, c: i32) -> ClassMatch {
        self.per_class.get(&c).cloned().unwrap_or_default()
    }
}

/// Intersections and areas of every overlapping (pred, gt) pair.
fn overlaps(pred: &InstanceMap, gt: &InstanceMap) -> (HashMap<(u32, u32), u64>, Vec<u64>, Vec<u64>) {
    let mut inter = HashMap::new();
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if p > 0 && g > 0 {
            *inter.entry((p as u32, g as u32)).or_insert(0) += 1;
        }
    }
    (inter, pred.areas(), gt.areas())
}

/// Class-wise matching: a pair matches when both instances share a class
/// and their IoU exceeds `iou_threshold`. Candidates are accepted greedily
/// by descending IoU, ties by `(gt, pred)`; above 0.5 this is the unique
/// matching. Unmatched predictions are false positives, unmatched ground
/// truth instances false negatives.
pub fn match_instances(pred: &LabeledInstances, gt: &LabeledInstances, iou_threshold: f64) -> Result<MatchResult> {
    match_with(pred, gt, iou_threshold, |l, id| l.class_of(id))
}

/// Class-agnostic matching: any two classified instances may pair. Used for
/// classification accuracy over detected cells.
pub(crate) fn match_any_class(
    pred: &LabeledInstances,
    gt: &LabeledInstances,
    iou_threshold: f64,
) -> Result<ClassMatch> {
    let r = match_with(pred, gt, iou_threshold, |l, id| if l.class_of(id) > 0 { 1 } else { 0 })?;
    Ok(r.class(1))
}

fn match_with(
    pred: &LabeledInstances,
    gt: &LabeledInstances,
    iou_threshold: f64,
    class_key: impl Fn(&LabeledInstances, u32) -> i32,
) -> Result<MatchResult> {
    if (pred.map.height, pred.map.width) != (gt.map.height, gt.map.width) {
        return Err(Error::InvalidInput(format!(
            "prediction is {}×{} but ground truth is {}×{}",
            pred.map.height, pred.map.width, gt.map.height, gt.map.width
        )));
    }
    let (inter, pred_area, gt_area) = overlaps(&pred.map, &gt.map);
    let mut candidates: Vec<MatchedPair> = inter
        .iter()
        .filter(|(&(p, g), _)| {
            let c = class_key(pred, p);
            c > 0 && c == class_key(gt, g)
        })
        .map(|(&(p, g), &i)| {
            let union = pred_area[p as usize] + gt_area[g as usize] - i;
            MatchedPair { pred: p, gt: g, iou: i as f64 / union as f64 }
        })
        .filter(|m| m.iou > iou_threshold)
        .collect();
    candidates.sort_by(|a, b| b.iou.partial_cmp(&a.iou).unwrap().then(a.gt.cmp(&b.gt)).then(a.pred.cmp(&b.pred)));

    let mut pred_used = BTreeSet::new();
    let mut gt_used = BTreeSet::new();
    let mut result = MatchResult::default();
    for m in candidates {
        if pred_used.contains(&m.pred) || gt_used.contains(&m.gt) {
            continue;
        }
        pred_used.insert(m.pred);
        gt_used.insert(m.gt);
        result.per_class.entry(class_key(gt, m.gt)).or_default().pairs.push(m);
    }
    for (id, &a) in pred_area.iter().enumerate().skip(1) {
        let c = class_key(pred, id as u32);
        if a > 0 && c > 0 && !pred_used.contains(&(id as u32)) {
            result.per_class.entry(c).or_default().false_positives += 1;
        }
    }
    for (id, &a) in gt_area.iter().enumerate().skip(1) {
        let c = class_key(gt, id as u32);
        if a > 0 && c > 0 && !gt_used.contains(&(id as u32)) {
            result.per_class.entry(c).or_default().false_negatives += 1;
        }
    }
    for cm in result.per_class.values_mut() {
        cm.pairs.sort_by_key(|m| (m.gt, m.pred));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PqScores {
    pub pq: f64,
    pub sq: f64,
    pub dq: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub iou_sum: f64,
}

impl PqScores {
    fn accumulate(&mut self, m: &ClassMatch) {
        for p in &m.pairs {
            self.iou_sum += p.iou;
        }
        self.tp += m.pairs.len() as u64;
        self.fp += m.false_positives;
        self.fn_ += m.false_negatives;
    }

    /// Apply `DQ = TP/(TP + FP/2 + FN/2)`, `SQ = ΣIoU/TP` (0 when TP = 0)
    /// and `PQ = DQ·SQ`.
    fn finish(mut self) -> Self {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        self.dq = if denom > 0.0 { self.tp as f64 / denom } else { 0.0 };
        self.sq = if self.tp > 0 { self.iou_sum / self.tp as f64 } else { 0.0 };
        self.pq = self.dq * self.sq;
        self
    }

    /// False when the class has neither predictions nor ground truth.
    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }
}

pub fn pq_sq_dq(m: &MatchResult, class: i32) -> PqScores {
    let mut s = PqScores::default();
    if let Some(cm) = m.per_class.get(&class) {
        s.accumulate(cm);
    }
    s.finish()
}

/// Dataset-aggregated PQ: counts and IoU sums pooled over all images, then
/// the formulas applied once.
pub fn dataset_pq(results: &[MatchResult], class: i32) -> PqScores {
    let mut s = PqScores::default();
    for r in results {
        if let Some(cm) = r.per_class.get(&class) {
            s.accumulate(cm);
        }
    }
    s.finish()
}
