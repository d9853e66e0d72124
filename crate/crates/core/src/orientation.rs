//! Rotation scoring: each quarter turn is scored by the median confidence
//! of its digit detections, and candidates are ranked best first.

use serde::{Deserialize, Serialize};

use crate::detections::{BackendError, DetectionSet, DetectorBackend};
use crate::geometry::Rotation;

/// One rotation of the input together with everything detected at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationCandidate {
    pub rotation: Rotation,
    pub detections: DetectionSet,
    pub symbol_detections: DetectionSet,
    pub median_conf: f64,
}

/// Median of the detection confidences; 0.0 for an empty set so that the
/// rotation still takes part and ranks last.
pub fn median_confidence(ds: &DetectionSet) -> f64 {
    median(ds.confidences().collect())
}

pub(crate) fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Orders candidates by median confidence, descending; equal medians keep
/// the 0, 90, 180, 270 order.
pub fn sort_candidates(candidates: &mut [RotationCandidate]) {
    candidates.sort_by(|a, b| {
        b.median_conf
            .total_cmp(&a.median_conf)
            .then(a.rotation.cmp(&b.rotation))
    });
}

/// Queries the backend at all four rotations and ranks the results.
pub fn rank_rotations<B: DetectorBackend>(
    backend: &B,
    input: &B::Input,
) -> Result<Vec<RotationCandidate>, BackendError> {
    let mut candidates = Rotation::ALL
        .into_iter()
        .map(|rotation| candidate_at(backend, input, rotation))
        .collect::<Result<Vec<_>, _>>()?;
    sort_candidates(&mut candidates);
    Ok(candidates)
}

/// Detections at a single, fixed rotation (no orientation search).
pub fn candidate_at<B: DetectorBackend>(
    backend: &B,
    input: &B::Input,
    rotation: Rotation,
) -> Result<RotationCandidate, BackendError> {
    let detections = backend.detect(input, rotation)?;
    let symbol_detections = backend.detect_symbols(input, rotation)?;
    Ok(RotationCandidate {
        rotation,
        median_conf: median_confidence(&detections),
        detections,
        symbol_detections,
    })
}
