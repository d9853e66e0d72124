//! Turning ranked rotation candidates into a validated (SpO2, PR) reading.
//!
//! For each candidate, best median confidence first: group the digits, pick
//! the SpO2 and PR clusters, and check both physiological ranges. A range
//! violation gets one retry after dropping height outliers; a second
//! violation moves on to the next candidate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{BackendError, DetectionSet, DetectorBackend};
use crate::geometry::Rotation;
use crate::grouping::{group_digits, DigitCluster};
use crate::orientation::{candidate_at, median, rank_rotations, RotationCandidate};
use crate::synthgen::{PR_RANGE, SPO2_RANGE};

/// Relative deviation from the cluster's median glyph height beyond which a
/// member is dropped.
pub const HEIGHT_OUTLIER_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// No symbol detected: the cluster with the larger mean glyph area is SpO2.
    RelativeArea,
    /// The cluster whose leftmost digit is nearest a `%`/`s`/`p` is SpO2.
    SymbolDistance,
}

/// Validated reading. Only [`read_vitals`] constructs these, so the ranges
/// always hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsReading {
    pub spo2: u32,
    pub pr: u32,
    pub rotation_used: Rotation,
    pub median_conf: f64,
    pub assignment_rule: AssignmentRule,
    pub pruned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureReason {
    NoValidRotation,
    TooFewDigits,
    RangeViolationAllRotations,
    BackendError,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::NoValidRotation => "NO_VALID_ROTATION",
            FailureReason::TooFewDigits => "TOO_FEW_DIGITS",
            FailureReason::RangeViolationAllRotations => "RANGE_VIOLATION_ALL_ROTATIONS",
            FailureReason::BackendError => "BACKEND_ERROR",
        })
    }
}

/// Why a single rotation candidate produced no reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CandidateRejection {
    TooFewDigits { found: usize },
    /// Clustering produced fewer than two clusters.
    Structural,
    /// Values the last assignment attempt produced, after pruning.
    RangeViolation { spo2: u64, pr: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostic {
    pub rotation: Rotation,
    pub median_conf: f64,
    pub digits: usize,
    #[serde(flatten)]
    pub rejection: CandidateRejection,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("no reading ({reason})")]
pub struct ReadFailure {
    pub reason: FailureReason,
    pub diagnostics: Vec<CandidateDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<BackendError>,
}

/// Wire form of a read result, shared by the command line and the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReadOutcome {
    Ok { reading: VitalsReading },
    Failed { failure: ReadFailure },
}

impl ReadOutcome {
    pub fn into_result(self) -> Result<VitalsReading, ReadFailure> {
        match self {
            ReadOutcome::Ok { reading } => Ok(reading),
            ReadOutcome::Failed { failure } => Err(failure),
        }
    }
}

impl From<Result<VitalsReading, ReadFailure>> for ReadOutcome {
    fn from(r: Result<VitalsReading, ReadFailure>) -> Self {
        match r {
            Ok(reading) => ReadOutcome::Ok { reading },
            Err(failure) => ReadOutcome::Failed { failure },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VitalsError {
    #[error("need at least two clusters to assign SpO2 and PR, got {0}")]
    TooFewClusters(usize),
}

/// Indices of the clusters chosen as SpO2 and PR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub spo2: usize,
    pub pr: usize,
    pub rule: AssignmentRule,
}

fn argmax_by(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    values
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Picks the SpO2 and PR clusters.
///
/// Without symbols the SpO2 cluster is the one with the largest mean glyph
/// area; otherwise it is the one whose leftmost digit lies nearest any
/// symbol. With three or more clusters, PR is the remaining cluster whose
/// value is a plausible pulse rate, falling back to the larger mean area.
pub fn assign_vitals(clusters: &[DigitCluster], symbols: &DetectionSet) -> Result<Assignment, VitalsError> {
    if clusters.len() < 2 {
        return Err(VitalsError::TooFewClusters(clusters.len()));
    }
    let (spo2, rule) = if symbols.is_empty() {
        let i = argmax_by(clusters.iter().map(|c| c.mean_glyph_area).enumerate()).expect("non-empty");
        (i, AssignmentRule::RelativeArea)
    } else {
        let nearest = |c: &DigitCluster| {
            symbols
                .detections
                .iter()
                .map(|s| c.leftmost_centroid.distance(&s.bbox.centroid()))
                .fold(f64::INFINITY, f64::min)
        };
        let i = argmax_by(clusters.iter().map(|c| -nearest(c)).enumerate()).expect("non-empty");
        (i, AssignmentRule::SymbolDistance)
    };

    let others: Vec<usize> = (0..clusters.len()).filter(|&i| i != spo2).collect();
    let pr = if let [only] = others[..] {
        only
    } else {
        let plausible: Vec<usize> = others
            .iter()
            .copied()
            .filter(|&i| PR_RANGE.contains(&clamp_u32(clusters[i].value)))
            .collect();
        match plausible[..] {
            [one] => one,
            _ => {
                let pool = if plausible.is_empty() { &others } else { &plausible };
                argmax_by(pool.iter().map(|&i| (i, clusters[i].mean_glyph_area))).expect("non-empty")
            }
        }
    };
    Ok(Assignment { spo2, pr, rule })
}

fn clamp_u32(v: u64) -> u32 {
    u32::try_from(v).unwrap_or(u32::MAX)
}

/// SpO2 in [70, 100] and PR in [40, 300], both inclusive.
pub fn validate_ranges(spo2: u64, pr: u64) -> bool {
    SPO2_RANGE.contains(&clamp_u32(spo2)) && PR_RANGE.contains(&clamp_u32(pr))
}

/// Drops members whose box height deviates from the cluster's median height
/// by more than 40 % of that median, then re-reads the value. At least one
/// member always survives: the one closest to the median height.
pub fn prune_outliers(cluster: &DigitCluster) -> DigitCluster {
    if cluster.members.len() <= 1 {
        return cluster.clone();
    }
    let heights: Vec<f64> = cluster.members.iter().map(|d| d.bbox.height()).collect();
    let med = median(heights.clone());
    let limit = HEIGHT_OUTLIER_FRACTION * med;
    let kept: Vec<_> = cluster
        .members
        .iter()
        .zip(&heights)
        .filter(|(_, &h)| (h - med).abs() <= limit)
        .map(|(d, _)| *d)
        .collect();
    let kept = if kept.is_empty() {
        let closest = heights
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - med).abs().total_cmp(&(b.1 - med).abs()))
            .map(|(i, _)| i)
            .expect("non-empty");
        vec![cluster.members[closest]]
    } else {
        kept
    };
    if kept.len() == cluster.members.len() {
        return cluster.clone();
    }
    DigitCluster::from_members(kept).expect("at least one member kept")
}

/// Runs grouping, assignment, validation and the single prune-and-retry on
/// one candidate.
pub fn evaluate_candidate(candidate: &RotationCandidate) -> Result<VitalsReading, CandidateRejection> {
    let digits = DetectionSet {
        detections: candidate
            .detections
            .detections
            .iter()
            .filter(|d| d.glyph.is_digit())
            .copied()
            .collect(),
        ..candidate.detections.clone()
    };
    let Some(clusters) = group_digits(&digits) else {
        return Err(CandidateRejection::TooFewDigits { found: digits.len() });
    };
    let symbols = &candidate.symbol_detections;
    let attempt = |clusters: &[DigitCluster]| -> Result<(Assignment, u64, u64), CandidateRejection> {
        let a = assign_vitals(clusters, symbols).map_err(|_| CandidateRejection::Structural)?;
        Ok((a, clusters[a.spo2].value, clusters[a.pr].value))
    };

    let reading = |a: Assignment, spo2: u64, pr: u64, pruned: bool| VitalsReading {
        spo2: spo2 as u32,
        pr: pr as u32,
        rotation_used: candidate.rotation,
        median_conf: candidate.median_conf,
        assignment_rule: a.rule,
        pruned,
    };

    let (a, spo2, pr) = attempt(&clusters)?;
    if validate_ranges(spo2, pr) {
        return Ok(reading(a, spo2, pr, false));
    }
    let pruned: Vec<DigitCluster> = clusters.iter().map(prune_outliers).collect();
    let (a, spo2, pr) = attempt(&pruned)?;
    if validate_ranges(spo2, pr) {
        return Ok(reading(a, spo2, pr, true));
    }
    Err(CandidateRejection::RangeViolation { spo2, pr })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    /// Try all four rotations ranked by median confidence. When off, only
    /// the image as captured is read.
    pub auto_orient: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self { auto_orient: true }
    }
}

fn diagnostic(c: &RotationCandidate, rejection: CandidateRejection) -> CandidateDiagnostic {
    CandidateDiagnostic {
        rotation: c.rotation,
        median_conf: c.median_conf,
        digits: c.detections.detections.iter().filter(|d| d.glyph.is_digit()).count(),
        rejection,
    }
}

/// Reads a set of ranked candidates, returning the first valid reading.
pub fn read_candidates(candidates: &[RotationCandidate]) -> Result<VitalsReading, ReadFailure> {
    let mut diagnostics = Vec::with_capacity(candidates.len());
    for c in candidates {
        match evaluate_candidate(c) {
            Ok(reading) => return Ok(reading),
            Err(rejection) => diagnostics.push(diagnostic(c, rejection)),
        }
    }
    let all = |pred: fn(&CandidateRejection) -> bool| {
        !diagnostics.is_empty() && diagnostics.iter().all(|d| pred(&d.rejection))
    };
    let reason = if all(|r| matches!(r, CandidateRejection::TooFewDigits { .. })) {
        FailureReason::TooFewDigits
    } else if all(|r| matches!(r, CandidateRejection::RangeViolation { .. })) {
        FailureReason::RangeViolationAllRotations
    } else {
        FailureReason::NoValidRotation
    };
    Err(ReadFailure {
        reason,
        diagnostics,
        backend_error: None,
    })
}

fn backend_failure(e: BackendError) -> ReadFailure {
    ReadFailure {
        reason: FailureReason::BackendError,
        diagnostics: Vec::new(),
        backend_error: Some(e),
    }
}

/// Reads SpO2 and PR from one input with automatic orientation.
pub fn read_vitals<B: DetectorBackend>(backend: &B, input: &B::Input) -> Result<VitalsReading, ReadFailure> {
    read_vitals_with(backend, input, ReadOptions::default())
}

pub fn read_vitals_with<B: DetectorBackend>(
    backend: &B,
    input: &B::Input,
    options: ReadOptions,
) -> Result<VitalsReading, ReadFailure> {
    let candidates = if options.auto_orient {
        rank_rotations(backend, input).map_err(backend_failure)?
    } else {
        vec![candidate_at(backend, input, Rotation::R0).map_err(backend_failure)?]
    };
    let reading = read_candidates(&candidates)?;
    debug_assert!(validate_ranges(u64::from(reading.spo2), u64::from(reading.pr)));
    Ok(reading)
}
