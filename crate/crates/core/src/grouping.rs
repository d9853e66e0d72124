//! Splitting digit detections into on-screen numbers.
//!
//! Digit centroids, normalised by the image size, are clustered with Lloyd's
//! k-means from deterministic farthest-point seeds; each cluster is then
//! read left to right.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{Detection, DetectionSet};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupingError {
    #[error("k-means needs at least k = {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },
    #[error("expected {k} initial centroids, got {got}")]
    BadInit { k: usize, got: usize },
    #[error("k must be positive")]
    ZeroK,
}

/// Number of clusters for a digit count; `None` means too few digits to
/// hold two readings.
pub fn choose_k(n_digits: usize) -> Option<usize> {
    match n_digits {
        0..=3 => None,
        4 | 5 => Some(2),
        _ => Some(3),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Point>,
    pub inertia: f64,
    /// Inertia after every assignment step, ending with `inertia`.
    pub inertia_history: Vec<f64>,
}

fn inertia(points: &[Point], labels: &[usize], centroids: &[Point]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| p.distance_sq(&centroids[l]))
        .sum()
}

fn recompute_centroids(points: &[Point], labels: &[usize], k: usize, previous: &[Point]) -> Vec<Point> {
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].0 += p.x;
        sums[l].1 += p.y;
        sums[l].2 += 1;
    }
    sums.iter()
        .zip(previous)
        .map(|(&(sx, sy, n), prev)| {
            if n == 0 {
                *prev
            } else {
                Point::new(sx / n as f64, sy / n as f64)
            }
        })
        .collect()
}

/// Moves a point into every empty cluster: the point farthest from its own
/// centroid among clusters that can spare one.
fn repair_empty(points: &[Point], labels: &mut [usize], centroids: &mut [Point]) -> bool {
    let k = centroids.len();
    let mut repaired = false;
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = points[a].distance_sq(&centroids[labels[a]]);
                let db = points[b].distance_sq(&centroids[labels[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            });
        let Some(i) = donor else {
            return repaired;
        };
        labels[i] = empty;
        centroids[empty] = points[i];
        let fresh = recompute_centroids(points, labels, k, centroids);
        centroids.copy_from_slice(&fresh);
        repaired = true;
    }
}

/// Lloyd iteration to a fixed point from the given initial centroids.
///
/// A point only changes cluster when another centroid is strictly closer,
/// so the result is deterministic and the loop terminates.
pub fn kmeans(points: &[Point], k: usize, init: &[Point]) -> Result<KMeansResult, GroupingError> {
    if k == 0 {
        return Err(GroupingError::ZeroK);
    }
    if points.len() < k {
        return Err(GroupingError::TooFewPoints { k, points: points.len() });
    }
    if init.len() != k {
        return Err(GroupingError::BadInit { k, got: init.len() });
    }

    let nearest = |p: &Point, centroids: &[Point], current: Option<usize>| -> usize {
        let mut best = current.unwrap_or(0);
        let mut best_d = p.distance_sq(&centroids[best]);
        for (j, c) in centroids.iter().enumerate() {
            let d = p.distance_sq(c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    };

    let mut centroids = init.to_vec();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids, None)).collect();
    let mut history = Vec::new();
    // assignment space is finite and inertia strictly drops on every change
    let max_rounds = 10_000;
    for _ in 0..max_rounds {
        centroids = recompute_centroids(points, &labels, k, &centroids);
        repair_empty(points, &mut labels, &mut centroids);
        history.push(inertia(points, &labels, &centroids));

        let next: Vec<usize> = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| nearest(p, &centroids, Some(l)))
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    let inertia = inertia(points, &labels, &centroids);
    Ok(KMeansResult {
        k,
        labels,
        centroids,
        inertia,
        inertia_history: history,
    })
}

/// Greedy farthest-point seeds: the mutually farthest pair, then repeatedly
/// the point farthest from all chosen seeds. Ties go to the lower index.
pub fn farthest_point_init(points: &[Point], k: usize) -> Vec<Point> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    if k == 1 || points.len() == 1 {
        return vec![points[0]];
    }
    let (mut a, mut b, mut best) = (0, 1, f64::NEG_INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].distance_sq(&points[j]);
            if d > best {
                (a, b, best) = (i, j, d);
            }
        }
    }
    let mut chosen = vec![a, b];
    while chosen.len() < k.min(points.len()) {
        let next = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let d = chosen
                    .iter()
                    .map(|&c| points[i].distance_sq(&points[c]))
                    .fold(f64::INFINITY, f64::min);
                (i, d)
            })
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc })
            .0;
        chosen.push(next);
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Digit centroids scaled to `[0, 1]²` by the image dimensions.
pub fn normalized_centroids(ds: &DetectionSet) -> Vec<Point> {
    let (w, h) = (ds.dims.w(), ds.dims.h());
    ds.detections
        .iter()
        .map(|d| {
            let c = d.bbox.centroid();
            Point::new(c.x / w, c.y / h)
        })
        .collect()
}

/// Digits forming one on-screen number, in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitCluster {
    pub members: Vec<Detection>,
    pub digits: Vec<u8>,
    /// Concatenated value; saturates at `u64::MAX` for absurdly long runs.
    pub value: u64,
    pub mean_glyph_area: f64,
    pub leftmost_centroid: Point,
}

impl DigitCluster {
    /// Orders members by centroid x (then y) and concatenates their digits.
    /// Returns `None` for an empty member list. Non-digit members are ignored.
    pub fn from_members(members: Vec<Detection>) -> Option<Self> {
        let mut members: Vec<Detection> = members.into_iter().filter(|d| d.glyph.is_digit()).collect();
        if members.is_empty() {
            return None;
        }
        members.sort_by(|a, b| {
            let (ca, cb) = (a.bbox.centroid(), b.bbox.centroid());
            ca.x.total_cmp(&cb.x).then(ca.y.total_cmp(&cb.y))
        });
        let digits: Vec<u8> = members.iter().filter_map(|d| d.glyph.digit_value()).collect();
        let value = digits.iter().fold(0u64, |acc, &d| {
            acc.checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(d)))
                .unwrap_or(u64::MAX)
        });
        let mean_glyph_area = members.iter().map(|d| d.bbox.area()).sum::<f64>() / members.len() as f64;
        let leftmost_centroid = members[0].bbox.centroid();
        Some(Self {
            members,
            digits,
            value,
            mean_glyph_area,
            leftmost_centroid,
        })
    }

    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }
}

/// Builds one cluster per non-empty label, in label order.
pub fn assemble_clusters(detections: &DetectionSet, result: &KMeansResult) -> Vec<DigitCluster> {
    (0..result.k)
        .filter_map(|label| {
            let members = detections
                .detections
                .iter()
                .zip(&result.labels)
                .filter(|(_, &l)| l == label)
                .map(|(d, _)| *d)
                .collect();
            DigitCluster::from_members(members)
        })
        .collect()
}

/// Full grouping step for one rotation's digit detections; `None` when
/// there are too few digits to cluster.
pub fn group_digits(digits: &DetectionSet) -> Option<Vec<DigitCluster>> {
    let k = choose_k(digits.len())?;
    let points = normalized_centroids(digits);
    let init = farthest_point_init(&points, k);
    let result = kmeans(&points, k, &init).ok()?;
    Some(assemble_clusters(digits, &result))
}
