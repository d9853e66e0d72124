//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists with the same field names as the JSON formats.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use pulseox_core::dataset::{kfold_split, load_annotations, write_corpus, AnnotationFormat, DatasetError};
use pulseox_core::detections::DetectorBackend;
use pulseox_core::evaluation::evaluate_corpus;
use pulseox_core::interchange::RecordedDetections;
use pulseox_core::metrics::{self, RankedPrediction};
use pulseox_core::orientation::rank_rotations;
use pulseox_core::synthgen::{self, CorpusConfig, OrientationMode};
use pulseox_core::vitals::{read_vitals_with, ReadOptions, ReadOutcome};
use pulseox_core::{BBox, Detection, GroundTruthScene, ImageDims, MockDetector, NoiseModel, Rotation, SceneRequest};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn rotation(degrees: i64) -> PyResult<Rotation> {
    Rotation::from_degrees(degrees).map_err(value_error)
}

fn dataset_error(e: DatasetError) -> PyErr {
    match e {
        DatasetError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_error(other),
    }
}

/// A labelled display scene.
#[pyclass(name = "Scene", module = "pulseox", frozen, from_py_object)]
#[derive(Clone)]
struct PyScene {
    inner: GroundTruthScene,
}

#[pymethods]
impl PyScene {
    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.dims.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.dims.height
    }

    #[getter]
    fn spo2(&self) -> u32 {
        self.inner.spo2_true
    }

    #[getter]
    fn pr(&self) -> u32 {
        self.inner.pr_true
    }

    #[getter]
    fn extra(&self) -> Option<u32> {
        self.inner.extra_value
    }

    /// Rotation in degrees that turns the captured image upright.
    #[getter]
    fn orientation(&self) -> u16 {
        self.inner.true_orientation.degrees()
    }

    #[getter]
    fn group(&self) -> &'static str {
        synthgen::classify_group(&self.inner).as_str()
    }

    #[getter]
    fn glyphs<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.glyphs)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[staticmethod]
    fn from_dict(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: GroundTruthScene = from_py(obj)?;
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(id={:?}, spo2={}, pr={}, orientation={}, group={})",
            self.inner.id,
            self.inner.spo2_true,
            self.inner.pr_true,
            self.inner.true_orientation.degrees(),
            self.group()
        )
    }
}

/// Seeded synthetic detector over scenes.
#[pyclass(name = "MockDetector", module = "pulseox", frozen)]
struct PyMockDetector {
    inner: MockDetector,
}

#[pymethods]
impl PyMockDetector {
    #[new]
    #[pyo3(signature = (seed, dropout=0.1, jitter=0.05, confusion=0.0, spread=1.0, noiseless=false))]
    fn new(seed: u64, dropout: f64, jitter: f64, confusion: f64, spread: f64, noiseless: bool) -> PyResult<Self> {
        let noise = if noiseless {
            NoiseModel::zero()
        } else {
            NoiseModel { dropout, jitter, confusion, confidence_spread: spread, ..NoiseModel::default() }
        };
        Ok(Self { inner: MockDetector::new(noise, seed).map_err(value_error)? })
    }

    /// Digit detections at `rotation` degrees.
    fn detect<'py>(&self, py: Python<'py>, scene: &PyScene, rotation: i64) -> PyResult<Bound<'py, PyAny>> {
        let set = self.inner.detect(&scene.inner, self::rotation(rotation)?).map_err(value_error)?;
        to_py(py, &set.detections)
    }

    /// `(degrees, median confidence)` pairs, best first.
    fn rank(&self, scene: &PyScene) -> PyResult<Vec<(u16, f64)>> {
        let ranked = rank_rotations(&self.inner, &scene.inner).map_err(value_error)?;
        Ok(ranked.iter().map(|c| (c.rotation.degrees(), c.median_conf)).collect())
    }

    #[pyo3(signature = (scene, auto_orient=true))]
    fn read<'py>(&self, py: Python<'py>, scene: &PyScene, auto_orient: bool) -> PyResult<Bound<'py, PyAny>> {
        let outcome: ReadOutcome = read_vitals_with(&self.inner, &scene.inner, ReadOptions { auto_orient }).into();
        to_py(py, &outcome)
    }
}

#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    pulseox_core::iou(&BBox::from(a), &BBox::from(b)).map_err(value_error)
}

/// Rotates a box counter-clockwise in an image of `width` x `height`.
#[pyfunction]
fn rotate_box(bbox: [f64; 4], rotation: i64, width: u32, height: u32) -> PyResult<[f64; 4]> {
    let rotated = pulseox_core::rotate_box(&BBox::from(bbox), self::rotation(rotation)?, ImageDims { width, height });
    Ok(rotated.map_err(value_error)?.into())
}

#[pyfunction]
#[pyo3(signature = (layout, display, spo2, pr, orientation=0, seed=0, width=640, height=640, extra=None, id=None))]
#[allow(clippy::too_many_arguments)]
fn generate_scene(
    layout: &str,
    display: &str,
    spo2: u32,
    pr: u32,
    orientation: i64,
    seed: u64,
    width: u32,
    height: u32,
    extra: Option<u32>,
    id: Option<String>,
) -> PyResult<PyScene> {
    let layout = serde_json::from_value(serde_json::Value::String(layout.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown layout {layout:?}")))?;
    let display = display.parse().map_err(value_error)?;
    let mut req = SceneRequest::new(layout, display, spo2, pr, rotation(orientation)?);
    req.dims = ImageDims { width, height };
    req.extra = extra;
    req.id = id;
    let inner = synthgen::generate_scene(&req, seed).map_err(value_error)?;
    Ok(PyScene { inner })
}

#[pyfunction]
#[pyo3(signature = (per_group, seed, resolution=640, orientation="random", extra_group_rate=0.0))]
fn generate_corpus(
    per_group: usize,
    seed: u64,
    resolution: u32,
    orientation: &str,
    extra_group_rate: f64,
) -> PyResult<Vec<PyScene>> {
    let orientation: OrientationMode = orientation.parse().map_err(value_error)?;
    let config = CorpusConfig {
        per_group,
        dims: ImageDims::square(resolution),
        orientation,
        extra_group_rate,
        seed,
    };
    let scenes = synthgen::generate_corpus(&config).map_err(value_error)?;
    Ok(scenes.into_iter().map(|inner| PyScene { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (path, format="native"))]
fn load_corpus(path: PathBuf, format: &str) -> PyResult<Vec<PyScene>> {
    let format: AnnotationFormat = format.parse().map_err(value_error)?;
    let images = load_annotations(&path, format).map_err(dataset_error)?;
    Ok(images.into_iter().map(|a| PyScene { inner: a.scene }).collect())
}

/// Writes scenes as a native corpus; returns the byte count.
#[pyfunction]
fn save_corpus(path: PathBuf, scenes: Vec<PyScene>) -> PyResult<usize> {
    let scenes: Vec<_> = scenes.into_iter().map(|s| s.inner).collect();
    write_corpus(&path, &scenes).map_err(dataset_error)
}

/// Reads vitals from detections keyed by rotation in degrees. Rotations
/// left out count as empty.
#[pyfunction]
#[pyo3(signature = (width, height, rotations, auto_orient=true))]
fn read_detections<'py>(
    py: Python<'py>,
    width: u32,
    height: u32,
    rotations: Vec<(i64, Bound<'py, PyAny>)>,
    auto_orient: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut sets = Vec::with_capacity(rotations.len());
    for (deg, dets) in rotations {
        let dets: Vec<Detection> = from_py(&dets)?;
        sets.push((rotation(deg)?, dets));
    }
    let backend = RecordedDetections::single("image", ImageDims { width, height }, sets).map_err(value_error)?;
    let outcome: ReadOutcome = read_vitals_with(&backend, "image", ReadOptions { auto_orient }).into();
    to_py(py, &outcome)
}

/// All-points interpolated AP over `(confidence, is_true_positive)` pairs.
#[pyfunction]
fn average_precision(ranked: Vec<(f64, bool)>, n_gt: usize) -> Option<f64> {
    let ranked: Vec<_> = ranked.into_iter().map(|(confidence, is_tp)| RankedPrediction { confidence, is_tp }).collect();
    metrics::average_precision(&ranked, n_gt)
}

#[pyfunction]
fn digit_set_correct(predicted: Vec<u64>, truth: Vec<u64>) -> bool {
    metrics::digit_set_correct(&predicted, &truth)
}

/// `(mean, sample standard deviation)`.
#[pyfunction]
fn aggregate_folds(values: Vec<f64>) -> PyResult<(f64, f64)> {
    let m = metrics::aggregate_folds(&values).map_err(value_error)?;
    Ok((m.mean, m.sd))
}

/// Image id to validation fold.
#[pyfunction]
fn kfold(scenes: Vec<PyScene>, folds: usize, seed: u64) -> PyResult<Vec<(String, usize)>> {
    let scenes: Vec<_> = scenes.into_iter().map(|s| s.inner).collect();
    let plan = kfold_split(&scenes, folds, seed).map_err(dataset_error)?;
    Ok(plan.assignments.into_iter().map(|a| (a.id, a.fold)).collect())
}

/// Cross-validated evaluation with the mock detector.
#[pyfunction]
#[pyo3(signature = (scenes, detector, folds=5, split_seed=0, iou_threshold=0.5, resolution=640))]
fn evaluate<'py>(
    py: Python<'py>,
    scenes: Vec<PyScene>,
    detector: &PyMockDetector,
    folds: usize,
    split_seed: u64,
    iou_threshold: f64,
    resolution: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let scenes: Vec<_> = scenes.into_iter().map(|s| s.inner).collect();
    let plan = kfold_split(&scenes, folds, split_seed).map_err(dataset_error)?;
    let (report, _) =
        evaluate_corpus(&detector.inner, |s| s, &scenes, &plan, iou_threshold, resolution).map_err(value_error)?;
    to_py(py, &report)
}

#[pymodule]
fn pulseox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyMockDetector>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(rotate_box, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(save_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(read_detections, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(digit_set_correct, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_folds, m)?)?;
    m.add_function(wrap_pyfunction!(kfold, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
