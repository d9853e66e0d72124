//! Reading SpO2 and pulse rate from per-glyph detections of pulse-oximeter
//! displays.

pub mod cli;
pub mod dataset;
pub mod detections;
pub mod evaluation;
pub mod geometry;
pub mod grouping;
pub mod interchange;
pub mod metrics;
pub mod orientation;
pub mod service;
pub mod synthgen;
pub mod vitals;

pub use detections::{
    BackendError, Detection, DetectionSet, DetectorBackend, GlyphClass, MockDetector, NoiseModel,
};
pub use geometry::{iou, rotate_box, BBox, ImageDims, Point, Rotation};
pub use synthgen::{generate_scene, GroundTruthScene, GroupTag, SceneRequest};
pub use vitals::{read_vitals, FailureReason, ReadFailure, VitalsReading};
