//! Detection interchange files and the backend that replays them.
//!
//! Each line is one detection:
//! `{"image_id":..,"rotation_applied":90,"class":"7","confidence":0.91,"box":[x0,y0,x1,y1]}`
//! with the box in pixels of the image after `rotation_applied`. Any
//! inference stack can produce this offline and feed the reader.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{
    BackendCapability, BackendError, Detection, DetectionSet, DetectorBackend, GlyphClass, MockDetector,
    SUPPORTED_RESOLUTIONS,
};
use crate::geometry::{BBox, ImageDims, Rotation};
use crate::synthgen::GroundTruthScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub rotation_applied: Rotation,
    pub class: GlyphClass,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl DetectionRecord {
    pub fn detection(&self) -> Detection {
        Detection {
            glyph: self.class,
            bbox: self.bbox,
            confidence: self.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterchangeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("detection {index} for {image:?}: {message}")]
    Invalid {
        index: usize,
        image: String,
        message: String,
    },
}

pub fn parse_detection_lines(text: &str) -> Result<Vec<DetectionRecord>, InterchangeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| InterchangeError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn to_detection_lines(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

/// Runs the mock at every rotation of every scene, digits first then symbols.
pub fn record_mock(backend: &MockDetector, scenes: &[GroundTruthScene]) -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    for scene in scenes {
        for rotation in Rotation::ALL {
            let digits = backend.detect(scene, rotation).expect("mock never fails");
            let symbols = backend.detect_symbols(scene, rotation).expect("mock never fails");
            for d in digits.detections.iter().chain(&symbols.detections) {
                out.push(DetectionRecord {
                    image_id: scene.id.clone(),
                    rotation_applied: rotation,
                    class: d.glyph,
                    confidence: d.confidence,
                    bbox: d.bbox,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct ImageRecord {
    dims: ImageDims,
    by_rotation: BTreeMap<Rotation, Vec<Detection>>,
}

/// Backend answering from previously recorded detections, keyed by image id.
///
/// A rotation with no records yields an empty set; an unknown id is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedDetections {
    images: BTreeMap<String, ImageRecord>,
    name: String,
}

impl RecordedDetections {
    /// `dims` gives the captured size of every image that may be queried.
    pub fn new(dims: impl IntoIterator<Item = (String, ImageDims)>) -> Self {
        Self {
            images: dims
                .into_iter()
                .map(|(id, dims)| (id, ImageRecord { dims, by_rotation: BTreeMap::new() }))
                .collect(),
            name: "recorded".into(),
        }
    }

    pub fn for_scenes(scenes: &[GroundTruthScene]) -> Self {
        Self::new(scenes.iter().map(|s| (s.id.clone(), s.dims)))
    }

    /// Adds records whose image id is known; validated against the rotated
    /// image size. Returns the ids that are not known, in first-seen order.
    pub fn insert_records(&mut self, records: &[DetectionRecord]) -> Result<Vec<String>, InterchangeError> {
        let mut orphans: Vec<String> = Vec::new();
        for (index, r) in records.iter().enumerate() {
            let Some(image) = self.images.get_mut(&r.image_id) else {
                if !orphans.contains(&r.image_id) {
                    orphans.push(r.image_id.clone());
                }
                continue;
            };
            let invalid = |message: String| InterchangeError::Invalid {
                index,
                image: r.image_id.clone(),
                message,
            };
            let d = r.detection();
            d.validate().map_err(|e| invalid(e.to_string()))?;
            let dims = image.dims.rotated(r.rotation_applied);
            if !dims.contains(&d.bbox) {
                return Err(invalid(format!(
                    "box {} outside {}x{} at {}",
                    d.bbox, dims.width, dims.height, r.rotation_applied
                )));
            }
            image.by_rotation.entry(r.rotation_applied).or_default().push(d);
        }
        Ok(orphans)
    }

    /// Single-image backend from inline detection lists.
    pub fn single(
        id: impl Into<String>,
        dims: ImageDims,
        sets: impl IntoIterator<Item = (Rotation, Vec<Detection>)>,
    ) -> Result<Self, InterchangeError> {
        let id = id.into();
        let mut backend = Self::new([(id.clone(), dims)]);
        let records: Vec<DetectionRecord> = sets
            .into_iter()
            .flat_map(|(rotation, ds)| {
                let id = id.clone();
                ds.into_iter().map(move |d| DetectionRecord {
                    image_id: id.clone(),
                    rotation_applied: rotation,
                    class: d.glyph,
                    confidence: d.confidence,
                    bbox: d.bbox,
                })
            })
            .collect();
        backend.insert_records(&records)?;
        Ok(backend)
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    fn select(&self, id: &str, rotation: Rotation, symbols: bool) -> Result<DetectionSet, BackendError> {
        let image = self
            .images
            .get(id)
            .ok_or_else(|| BackendError::UnknownImage(id.to_string()))?;
        let detections = image
            .by_rotation
            .get(&rotation)
            .map(|ds| ds.iter().filter(|d| d.glyph.is_symbol() == symbols).copied().collect())
            .unwrap_or_default();
        Ok(DetectionSet {
            detections,
            dims: image.dims.rotated(rotation),
            rotation_applied: rotation,
        })
    }
}

impl Default for RecordedDetections {
    fn default() -> Self {
        Self::new([])
    }
}

impl DetectorBackend for RecordedDetections {
    type Input = str;

    fn capability(&self) -> BackendCapability {
        BackendCapability {
            name: self.name.clone(),
            resolutions: SUPPORTED_RESOLUTIONS.to_vec(),
            concurrent: true,
        }
    }

    fn detect(&self, id: &str, rotation: Rotation) -> Result<DetectionSet, BackendError> {
        self.select(id, rotation, false)
    }

    fn detect_symbols(&self, id: &str, rotation: Rotation) -> Result<DetectionSet, BackendError> {
        self.select(id, rotation, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::NoiseModel;
    use crate::synthgen::{generate_corpus, CorpusConfig};
    use crate::vitals::read_vitals;

    fn scenes() -> Vec<GroundTruthScene> {
        generate_corpus(&CorpusConfig { per_group: 4, seed: 2, ..Default::default() }).unwrap()
    }

    #[test]
    fn lines_round_trip() {
        let mock = MockDetector::new(NoiseModel::default(), 5).unwrap();
        let records = record_mock(&mock, &scenes());
        let text = to_detection_lines(&records);
        assert_eq!(parse_detection_lines(&text).unwrap(), records);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"image_id":"SSD-N-0000","rotation_applied":0,"class":"#));
    }

    #[test]
    fn replay_equals_live_mock() {
        let scenes = scenes();
        let mock = MockDetector::new(NoiseModel::default(), 5).unwrap();
        let mut recorded = RecordedDetections::for_scenes(&scenes);
        let orphans = recorded.insert_records(&record_mock(&mock, &scenes)).unwrap();
        assert!(orphans.is_empty());
        for s in &scenes {
            for r in Rotation::ALL {
                assert_eq!(recorded.detect(&s.id, r).unwrap(), mock.detect(s, r).unwrap());
                assert_eq!(recorded.detect_symbols(&s.id, r).unwrap(), mock.detect_symbols(s, r).unwrap());
            }
            assert_eq!(read_vitals(&recorded, s.id.as_str()), read_vitals(&mock, s));
        }
    }

    #[test]
    fn unknown_ids_and_missing_rotations() {
        let scenes = scenes();
        let mut recorded = RecordedDetections::for_scenes(&scenes[..1]);
        let records = record_mock(&MockDetector::noiseless(), &scenes[..2]);
        let orphans = recorded.insert_records(&records).unwrap();
        assert_eq!(orphans, vec![scenes[1].id.clone()]);
        assert_eq!(
            recorded.detect("nope", Rotation::R0),
            Err(BackendError::UnknownImage("nope".into()))
        );
        let only_r0: Vec<_> = records
            .into_iter()
            .filter(|r| r.image_id == scenes[0].id && r.rotation_applied == Rotation::R0)
            .collect();
        let mut sparse = RecordedDetections::for_scenes(&scenes[..1]);
        sparse.insert_records(&only_r0).unwrap();
        let empty = sparse.detect(&scenes[0].id, Rotation::R90).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dims, scenes[0].dims.rotated(Rotation::R90));
    }

    #[test]
    fn bad_records_are_rejected() {
        assert!(matches!(
            parse_detection_lines("{\"image_id\":\"a\"}\n"),
            Err(InterchangeError::Parse { line: 1, .. })
        ));
        let mut r = RecordedDetections::new([("a".to_string(), ImageDims::new(640, 480).unwrap())]);
        let record = DetectionRecord {
            image_id: "a".into(),
            rotation_applied: Rotation::R90,
            class: GlyphClass::Digit(1),
            confidence: 0.9,
            bbox: BBox::from([0.0, 500.0, 10.0, 600.0]),
        };
        // 480 wide and 640 tall once rotated, so the box fits
        assert!(r.insert_records(std::slice::from_ref(&record)).is_ok());
        let outside = DetectionRecord { rotation_applied: Rotation::R0, ..record.clone() };
        assert!(matches!(r.insert_records(&[outside]), Err(InterchangeError::Invalid { .. })));
        let conf = DetectionRecord { confidence: 1.5, ..record };
        assert!(matches!(r.insert_records(&[conf]), Err(InterchangeError::Invalid { .. })));
    }
}
