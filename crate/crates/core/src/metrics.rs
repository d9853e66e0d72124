//! Detection and reading metrics.
//!
//! Box matching is greedy in descending confidence: a prediction is a true
//! positive when its IoU with an unmatched ground-truth box of the same class
//! is strictly greater than the threshold. AP integrates the all-points
//! interpolated precision-recall curve exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{Detection, GlyphClass};
use crate::geometry::{iou, BBox, GeometryError};
use crate::vitals::{ReadFailure, VitalsReading};

/// IoU threshold for mAP@50.
pub const IOU_50: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("IoU threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("no ground-truth instances; AP is undefined")]
    NoGroundTruth,
    #[error("accuracy needs at least one image")]
    NoImages,
    #[error("need at least two folds for a standard deviation, got {0}")]
    TooFewFolds(usize),
    #[error("{what}: {left} predictions vs {right} ground truths")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pairs: Vec<MatchedPair>,
    /// Per prediction, in input order: whether it was a true positive.
    pub pred_is_tp: Vec<bool>,
}

/// Indices of `preds` sorted by descending confidence; ties keep input order.
fn by_confidence(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

pub fn match_detections(
    preds: &[Detection],
    gt: &[(GlyphClass, BBox)],
    iou_threshold: f64,
) -> Result<MatchOutcome, MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(MetricsError::BadThreshold(iou_threshold));
    }
    let mut taken = vec![false; gt.len()];
    let mut pred_is_tp = vec![false; preds.len()];
    let mut pairs = Vec::new();
    for p in by_confidence(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, (class, bbox)) in gt.iter().enumerate() {
            if taken[g] || *class != preds[p].glyph {
                continue;
            }
            let overlap = iou(&preds[p].bbox, bbox)?;
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, overlap)) = best.filter(|&(_, o)| o > iou_threshold) {
            taken[g] = true;
            pred_is_tp[p] = true;
            pairs.push(MatchedPair { pred: p, gt: g, iou: overlap });
        }
    }
    let tp = pairs.len();
    Ok(MatchOutcome {
        tp,
        fp: preds.len() - tp,
        fn_: gt.len() - tp,
        pairs,
        pred_is_tp,
    })
}

/// A scored prediction of one class and whether it matched ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub confidence: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall after each prediction, best-scored first.
pub fn pr_curve(ranked: &[RankedPrediction], n_gt: usize) -> Vec<PrPoint> {
    let mut order: Vec<&RankedPrediction> = ranked.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut tp = 0usize;
    order
        .iter()
        .enumerate()
        .map(|(i, r)| {
            tp += usize::from(r.is_tp);
            PrPoint {
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
                precision: tp as f64 / (i + 1) as f64,
            }
        })
        .collect()
}

/// Area under the all-points interpolated precision-recall curve; `None`
/// when the class has no ground-truth instances.
pub fn average_precision(ranked: &[RankedPrediction], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let curve = pr_curve(ranked, n_gt);
    // precision envelope: best precision at any recall at or beyond this point
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        if p.recall > prev_recall {
            area += (p.recall - prev_recall) * env;
            prev_recall = p.recall;
        }
    }
    Some(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// AP of every class that has ground truth, keyed by class label.
    pub per_class: BTreeMap<GlyphClass, f64>,
    pub map: f64,
}

/// Mean AP over the classes present in ground truth, at `iou_threshold`.
pub fn mean_average_precision(
    preds: &[Vec<Detection>],
    gts: &[Vec<(GlyphClass, BBox)>],
    iou_threshold: f64,
) -> Result<MapReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch {
            what: "images",
            left: preds.len(),
            right: gts.len(),
        });
    }
    let mut ranked: BTreeMap<GlyphClass, Vec<RankedPrediction>> = BTreeMap::new();
    let mut n_gt: BTreeMap<GlyphClass, usize> = BTreeMap::new();
    for (p, g) in preds.iter().zip(gts) {
        let outcome = match_detections(p, g, iou_threshold)?;
        for (d, &is_tp) in p.iter().zip(&outcome.pred_is_tp) {
            ranked.entry(d.glyph).or_default().push(RankedPrediction {
                confidence: d.confidence,
                is_tp,
            });
        }
        for (class, _) in g {
            *n_gt.entry(*class).or_default() += 1;
        }
    }
    if n_gt.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let per_class: BTreeMap<GlyphClass, f64> = n_gt
        .iter()
        .map(|(class, &n)| {
            let r = ranked.get(class).map(Vec::as_slice).unwrap_or(&[]);
            (*class, average_precision(r, n).expect("n > 0"))
        })
        .collect();
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(MapReport { per_class, map })
}

pub fn map50(preds: &[Vec<Detection>], gts: &[Vec<(GlyphClass, BBox)>]) -> Result<MapReport, MetricsError> {
    mean_average_precision(preds, gts, IOU_50)
}

/// Multiset equality of the numbers read from one image.
pub fn digit_set_correct(pred: &[u64], ground: &[u64]) -> bool {
    let mut a = pred.to_vec();
    let mut b = ground.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Percentage of correct images.
pub fn accuracy(correct: &[bool]) -> Result<f64, MetricsError> {
    if correct.is_empty() {
        return Err(MetricsError::NoImages);
    }
    let hits = correct.iter().filter(|&&c| c).count();
    Ok(hits as f64 / correct.len() as f64 * 100.0)
}

pub fn digit_set_accuracy(preds: &[Vec<u64>], grounds: &[Vec<u64>]) -> Result<f64, MetricsError> {
    if preds.len() != grounds.len() {
        return Err(MetricsError::LengthMismatch {
            what: "number sets",
            left: preds.len(),
            right: grounds.len(),
        });
    }
    let c: Vec<bool> = preds
        .iter()
        .zip(grounds)
        .map(|(p, g)| digit_set_correct(p, g))
        .collect();
    accuracy(&c)
}

/// A reading is correct only when both SpO2 and PR equal the truth.
pub fn vitals_correct(reading: &Result<VitalsReading, ReadFailure>, truth: (u32, u32)) -> bool {
    matches!(reading, Ok(r) if (r.spo2, r.pr) == truth)
}

pub fn vitals_accuracy(
    readings: &[Result<VitalsReading, ReadFailure>],
    truths: &[(u32, u32)],
) -> Result<f64, MetricsError> {
    if readings.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            what: "readings",
            left: readings.len(),
            right: truths.len(),
        });
    }
    let c: Vec<bool> = readings
        .iter()
        .zip(truths)
        .map(|(r, &t)| vitals_correct(r, t))
        .collect();
    accuracy(&c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1} ± {:.1}", self.mean, self.sd)
    }
}

/// Mean and sample standard deviation of per-fold values.
pub fn aggregate_folds(values: &[f64]) -> Result<MeanSd, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewFolds(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanSd { mean, sd: var.sqrt() })
}
