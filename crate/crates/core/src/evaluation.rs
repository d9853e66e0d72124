//! Corpus evaluation: detection mAP plus the three per-image accuracies,
//! aggregated over cross-validation folds.
//!
//! Experiment I groups the digits detected in the image as captured.
//! Experiment II groups the digits of the best-ranked rotation. Both compare
//! the multiset of grouped numbers with the display's numbers. Experiment
//! III runs the full reader and requires SpO2 and PR to both match.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SplitPlan;
use crate::detections::{BackendError, Detection, DetectorBackend, GlyphClass};
use crate::geometry::{BBox, Rotation};
use crate::grouping::group_digits;
use crate::metrics::{
    accuracy, aggregate_folds, digit_set_correct, mean_average_precision, vitals_correct, MeanSd, MetricsError,
};
use crate::orientation::{rank_rotations, RotationCandidate};
use crate::synthgen::{GroundTruthScene, GroupTag};
use crate::vitals::{read_candidates, ReadFailure, VitalsReading};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("image {id}: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
    #[error("image {0} is not in the split plan")]
    NotInPlan(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Everything measured on one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub id: String,
    pub group: GroupTag,
    pub ground_numbers: Vec<u64>,
    /// Numbers grouped from the image as captured.
    pub captured_numbers: Vec<u64>,
    /// Numbers grouped from the best-ranked rotation.
    pub oriented_numbers: Vec<u64>,
    pub reading: Result<VitalsReading, ReadFailure>,
    pub experiment_i: bool,
    pub experiment_ii: bool,
    pub experiment_iii: bool,
}

fn numbers_of(candidate: &RotationCandidate) -> Vec<u64> {
    let mut v: Vec<u64> = group_digits(&candidate.detections)
        .map(|clusters| clusters.iter().map(|c| c.value).collect())
        .unwrap_or_default();
    v.sort_unstable();
    v
}

/// Evaluates one image and returns the detections at the captured rotation
/// for mAP.
pub fn evaluate_image<B: DetectorBackend>(
    backend: &B,
    input: &B::Input,
    scene: &GroundTruthScene,
) -> Result<(ImageOutcome, Vec<Detection>), BackendError> {
    let ranked = rank_rotations(backend, input)?;
    let captured = ranked
        .iter()
        .find(|c| c.rotation == Rotation::R0)
        .expect("all four rotations are ranked");
    let ground_numbers = scene.ground_numbers();
    let captured_numbers = numbers_of(captured);
    let oriented_numbers = numbers_of(&ranked[0]);
    let reading = read_candidates(&ranked);
    let outcome = ImageOutcome {
        id: scene.id.clone(),
        group: scene.group(),
        experiment_i: digit_set_correct(&captured_numbers, &ground_numbers),
        experiment_ii: digit_set_correct(&oriented_numbers, &ground_numbers),
        experiment_iii: vitals_correct(&reading, (scene.spo2_true, scene.pr_true)),
        ground_numbers,
        captured_numbers,
        oriented_numbers,
        reading,
    };
    let mut detections = captured.detections.detections.clone();
    detections.extend_from_slice(&captured.symbol_detections.detections);
    Ok((outcome, detections))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub n: usize,
    pub experiment_i: f64,
    pub experiment_ii: f64,
    pub experiment_iii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_images: usize,
    pub folds: usize,
    pub resolution: u32,
    pub iou_threshold: f64,
    pub per_class_ap: BTreeMap<GlyphClass, f64>,
    /// Mean AP over classes with ground truth; absent when there is none.
    pub map: Option<f64>,
    pub experiment_i: MeanSd,
    pub experiment_ii: MeanSd,
    pub experiment_iii: MeanSd,
    pub per_fold: Vec<FoldScores>,
}

/// Evaluates every scene and aggregates the accuracies over the folds of
/// `plan`; each fold's score is the accuracy on its validation images.
pub fn evaluate_corpus<B, F>(
    backend: &B,
    input_of: F,
    scenes: &[GroundTruthScene],
    plan: &SplitPlan,
    iou_threshold: f64,
    resolution: u32,
) -> Result<(EvalReport, Vec<ImageOutcome>), EvalError>
where
    B: DetectorBackend,
    F: for<'a> Fn(&'a GroundTruthScene) -> &'a B::Input,
{
    let mut outcomes = Vec::with_capacity(scenes.len());
    let mut preds = Vec::with_capacity(scenes.len());
    let mut gts: Vec<Vec<(GlyphClass, BBox)>> = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let (outcome, detections) = evaluate_image(backend, input_of(scene), scene).map_err(|source| {
            EvalError::Backend { id: scene.id.clone(), source }
        })?;
        outcomes.push(outcome);
        preds.push(detections);
        gts.push(scene.glyphs.iter().map(|g| (g.class, g.bbox)).collect());
    }

    let (per_class_ap, map) = match mean_average_precision(&preds, &gts, iou_threshold) {
        Ok(r) => (r.per_class, Some(r.map)),
        Err(MetricsError::NoGroundTruth) => (BTreeMap::new(), None),
        Err(e) => return Err(e.into()),
    };

    let mut fold_of = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        fold_of.push(plan.fold_of(&o.id).ok_or_else(|| EvalError::NotInPlan(o.id.clone()))?);
    }
    let mut per_fold = Vec::with_capacity(plan.folds);
    for fold in 0..plan.folds {
        let members: Vec<&ImageOutcome> = outcomes
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f == fold)
            .map(|(o, _)| o)
            .collect();
        let score = |pick: fn(&ImageOutcome) -> bool| -> Result<f64, MetricsError> {
            accuracy(&members.iter().map(|o| pick(o)).collect::<Vec<_>>())
        };
        per_fold.push(FoldScores {
            fold,
            n: members.len(),
            experiment_i: score(|o| o.experiment_i)?,
            experiment_ii: score(|o| o.experiment_ii)?,
            experiment_iii: score(|o| o.experiment_iii)?,
        });
    }
    let agg = |pick: fn(&FoldScores) -> f64| aggregate_folds(&per_fold.iter().map(pick).collect::<Vec<_>>());
    let report = EvalReport {
        n_images: scenes.len(),
        folds: plan.folds,
        resolution,
        iou_threshold,
        per_class_ap,
        map,
        experiment_i: agg(|f| f.experiment_i)?,
        experiment_ii: agg(|f| f.experiment_ii)?,
        experiment_iii: agg(|f| f.experiment_iii)?,
        per_fold,
    };
    Ok((report, outcomes))
}

impl EvalReport {
    /// Plain-text table: one row per experiment, then detection AP.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<36} {:>10} {:>16}", "Experiment", "Resolution", "Accuracy (%)");
        let rows = [
            ("I   digit recognition", self.experiment_i),
            ("II  + auto-orientation", self.experiment_ii),
            ("III + clustering (SpO2 and PR)", self.experiment_iii),
        ];
        for (name, score) in rows {
            let res = format!("{0}x{0}", self.resolution);
            let _ = writeln!(out, "{name:<36} {res:>10} {:>16}", score.to_string());
        }
        let _ = writeln!(out);
        let label = format!("mAP@{}", (self.iou_threshold * 100.0).round());
        match self.map {
            Some(m) => {
                let _ = writeln!(out, "{label}: {m:.4}");
            }
            None => {
                let _ = writeln!(out, "{label}: undefined (no ground truth)");
            }
        }
        for (class, ap) in &self.per_class_ap {
            let _ = writeln!(out, "  AP[{}] {ap:.4}", class.label());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "images {}, folds {}", self.n_images, self.folds);
        out
    }
}
