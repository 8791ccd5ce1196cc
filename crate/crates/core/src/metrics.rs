//! Detection evaluation: greedy IoU matching, precision / recall / F1, and
//! all-points interpolated average precision.
//!
//! Conventions: detections are matched within each `(image_id, class_id)`
//! slice in descending confidence order (ties keep input order); a
//! detection takes the still-unmatched ground truth of highest IoU if that
//! IoU reaches the threshold. 0/0 ratios are reported as 0. Overall P/R/F1
//! are micro-averaged over pooled counts; mAP is the mean over classes whose
//! AP is defined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox2D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox2D,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox2D,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PRCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for PRCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// TP flag per detection, in input order.
    pub is_tp: Vec<bool>,
    pub counts: PRCounts,
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(
            "iou threshold",
            format!("must lie in (0, 1), got {iou_threshold}"),
        ));
    }
    Ok(())
}

fn check_confidences(dets: &[DetectionRecord]) -> Result<()> {
    for (i, d) in dets.iter().enumerate() {
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(Error::invalid(
                "detection",
                format!("detection {i} has confidence {} outside [0, 1]", d.confidence),
            ));
        }
    }
    Ok(())
}

/// Indices of `dets` sorted by descending confidence; stable, so ties keep input order.
fn by_confidence(dets: &[DetectionRecord], subset: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = subset.into_iter().collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

fn box_key(b: &BBox2D) -> [f64; 4] {
    b.to_array()
}

pub fn match_detections(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
) -> Result<MatchOutcome> {
    check_threshold(iou_threshold)?;
    check_confidences(dets)?;

    let mut gt_slices: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_slices.entry((g.image_id.as_str(), g.class_id)).or_default().push(i);
    }
    let mut det_slices: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_slices.entry((d.image_id.as_str(), d.class_id)).or_default().push(i);
    }

    let mut is_tp = vec![false; dets.len()];
    let mut counts = PRCounts::default();
    for (key, det_idx) in &det_slices {
        let slice_gts = gt_slices.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let mut taken = vec![false; slice_gts.len()];
        for d in by_confidence(dets, det_idx.iter().copied()) {
            let mut best: Option<(usize, f64)> = None;
            for (k, &g) in slice_gts.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let v = dets[d].bbox.iou(&gts[g].bbox);
                // Equal overlaps go to the lexicographically smallest box, so
                // the outcome never depends on input order.
                let better = best.is_none_or(|(j, b)| {
                    v > b || (v == b && box_key(&gts[g].bbox) < box_key(&gts[slice_gts[j]].bbox))
                });
                if better {
                    best = Some((k, v));
                }
            }
            match best {
                Some((k, v)) if v >= iou_threshold => {
                    taken[k] = true;
                    is_tp[d] = true;
                    counts.tp += 1;
                }
                _ => counts.fp += 1,
            }
        }
    }
    counts.fn_ = gts.len() - counts.tp;
    Ok(MatchOutcome { is_tp, counts })
}

/// `(P, R, F1)` with every 0/0 taken as 0.
pub fn precision_recall_f1(c: &PRCounts) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Area under the monotone (non-increasing) precision envelope of the
/// precision–recall curve traced by confidence-sorted TP/FP flags.
///
/// `None` when there is nothing to measure (`n_gt == 0`, no detections).
/// With `n_gt == 0` but detections present, AP is 0.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        if flags.is_empty() {
            return None;
        }
        log::warn!("{} detections for a class without ground truth; AP = 0", flags.len());
        return Some(0.0);
    }
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &hit) in flags.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Some(ap)
}

pub fn mean_ap(per_class_ap: &[f64]) -> Result<f64> {
    if per_class_ap.is_empty() {
        return Err(Error::invalid("mAP input", "no class with a defined AP"));
    }
    Ok(per_class_ap.iter().sum::<f64>() / per_class_ap.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub n_gt: usize,
    pub n_det: usize,
    pub counts: PRCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class has neither detections nor ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub counts: PRCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
    /// False when no class had a defined AP; `map` is then reported as 0.
    pub map_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub iou_threshold: f64,
    pub per_class: Vec<ClassMetrics>,
    pub overall: OverallMetrics,
}

/// Evaluates over every class id that appears in `dets` or `gts`, plus
/// `0..n_classes` when given.
pub fn evaluate_with_classes(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
    n_classes: Option<u32>,
) -> Result<EvaluationReport> {
    let outcome = match_detections(dets, gts, iou_threshold)?;
    let mut classes: BTreeSet<u32> = dets.iter().map(|d| d.class_id).collect();
    classes.extend(gts.iter().map(|g| g.class_id));
    if let Some(n) = n_classes {
        classes.extend(0..n);
    }

    let mut per_class = Vec::with_capacity(classes.len());
    let mut pooled = PRCounts::default();
    let mut defined_aps = Vec::new();
    for class_id in classes {
        let n_gt = gts.iter().filter(|g| g.class_id == class_id).count();
        let order = by_confidence(dets, (0..dets.len()).filter(|&i| dets[i].class_id == class_id));
        let flags: Vec<bool> = order.iter().map(|&i| outcome.is_tp[i]).collect();
        let tp = flags.iter().filter(|&&f| f).count();
        let counts = PRCounts {
            tp,
            fp: flags.len() - tp,
            fn_: n_gt - tp,
        };
        let (precision, recall, f1) = precision_recall_f1(&counts);
        let ap = average_precision(&flags, n_gt);
        if let Some(ap) = ap {
            defined_aps.push(ap);
        }
        pooled += counts;
        per_class.push(ClassMetrics {
            class_id,
            n_gt,
            n_det: flags.len(),
            counts,
            precision,
            recall,
            f1,
            ap,
        });
    }
    let (precision, recall, f1) = precision_recall_f1(&pooled);
    let (map, map_defined) = match mean_ap(&defined_aps) {
        Ok(m) => (m, true),
        Err(_) => (0.0, false),
    };
    Ok(EvaluationReport {
        iou_threshold,
        per_class,
        overall: OverallMetrics {
            counts: pooled,
            precision,
            recall,
            f1,
            map,
            map_defined,
        },
    })
}

pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    iou_threshold: f64,
) -> Result<EvaluationReport> {
    evaluate_with_classes(dets, gts, iou_threshold, None)
}

impl EvaluationReport {
    /// Markdown table with one row per class and an `All` row. `names` maps
    /// class ids to display names where available.
    pub fn to_markdown(&self, names: &[String]) -> String {
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| Class | P | R | F1 | mAP@{} |",
            self.iou_threshold
        );
        out.push_str("|---|---:|---:|---:|---:|\n");
        for c in &self.per_class {
            let name = names
                .get(c.class_id as usize)
                .cloned()
                .unwrap_or_else(|| format!("class {}", c.class_id));
            let ap = c.ap.map_or_else(|| "-".to_string(), pct);
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} | {ap} |",
                pct(c.precision),
                pct(c.recall),
                pct(c.f1)
            );
        }
        let o = &self.overall;
        let map = if o.map_defined { pct(o.map) } else { format!("{} (undefined)", pct(o.map)) };
        let _ = writeln!(
            out,
            "| All | {} | {} | {} | {map} |",
            pct(o.precision),
            pct(o.recall),
            pct(o.f1)
        );
        out
    }
}
