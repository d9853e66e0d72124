//! Stateless HTTP endpoint for the reader.
//!
//! `POST /v1/read` takes exactly one input: inline detections, an inline
//! scene read through the mock detector, the id of a scene from the corpus
//! the server was started with, or an image path for an external model.
//! `GET /health` reports liveness and backend capabilities. Schemas and
//! status codes are listed in `docs/service.md`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::detections::{
    fnv1a, BackendCapability, BackendError, Detection, DetectionSet, DetectorBackend, MockDetector, NoiseModel,
    SUPPORTED_RESOLUTIONS,
};
use crate::geometry::{ImageDims, Rotation};
use crate::interchange::RecordedDetections;
use crate::synthgen::GroundTruthScene;
use crate::vitals::{read_vitals_with, ReadOptions, ReadOutcome};

/// Static configuration; never changes while serving.
#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Weights for an external image model, if one is expected.
    pub model_path: Option<PathBuf>,
    /// Scenes addressable by `scene_id`.
    pub corpus: HashMap<String, GroundTruthScene>,
}

impl ServiceConfig {
    pub fn with_corpus(mut self, scenes: impl IntoIterator<Item = GroundTruthScene>) -> Self {
        self.corpus = scenes.into_iter().map(|s| (s.id.clone(), s)).collect();
        self
    }

    fn model_present(&self) -> Option<bool> {
        self.model_path.as_deref().map(Path::exists)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationDetections {
    pub rotation: Rotation,
    pub detections: Vec<Detection>,
}

/// Detections of one image, for one or more rotations. Rotations not listed
/// count as empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineDetections {
    /// Captured image size.
    pub dims: ImageDims,
    pub rotations: Vec<RotationDetections>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageReference {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<InlineDetections>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<GroundTruthScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageReference>,
    /// Mock noise for `scene` and `scene_id`; zero noise when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_orient: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadResponse {
    pub request_id: String,
    #[serde(flatten)]
    pub outcome: ReadOutcome,
    pub processing_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    MalformedBody,
    MissingInput,
    AmbiguousInput,
    InvalidDetections,
    InvalidScene,
    InvalidNoise,
    UnknownScene,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::MalformedBody | ErrorCode::MissingInput | ErrorCode::AmbiguousInput => {
                StatusCode::BAD_REQUEST
            }
            ErrorCode::InvalidDetections | ErrorCode::InvalidScene | ErrorCode::InvalidNoise => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ErrorCode::UnknownScene => StatusCode::NOT_FOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub request_id: Option<String>,
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplyBody {
    Read(ReadResponse),
    Error(ErrorResponse),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: StatusCode,
    pub body: ReplyBody,
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Stand-in for an image model served elsewhere. This build carries no image
/// decoder, so it only reports whether the configured weights exist.
pub struct ExternalModel<'a> {
    pub model_path: Option<&'a Path>,
}

impl DetectorBackend for ExternalModel<'_> {
    type Input = Path;

    fn capability(&self) -> BackendCapability {
        BackendCapability {
            name: "external".into(),
            resolutions: SUPPORTED_RESOLUTIONS.to_vec(),
            concurrent: true,
        }
    }

    fn detect(&self, image: &Path, _: Rotation) -> Result<DetectionSet, BackendError> {
        match self.model_path {
            None => Err(BackendError::ModelMissing("no external model configured".into())),
            Some(p) if !p.exists() => Err(BackendError::ModelMissing(p.display().to_string())),
            Some(_) => Err(BackendError::MalformedInput(format!(
                "{}: image inference is not available in this build",
                image.display()
            ))),
        }
    }

    fn detect_symbols(&self, image: &Path, rotation: Rotation) -> Result<DetectionSet, BackendError> {
        self.detect(image, rotation)
    }
}

fn reject(request_id: Option<String>, code: ErrorCode, message: impl Into<String>) -> Reply {
    Reply {
        status: code.status(),
        body: ReplyBody::Error(ErrorResponse {
            request_id,
            error: ErrorDetail { code, message: message.into() },
        }),
    }
}

/// Handles one read request body. The reply depends only on the body and
/// `config`; only `processing_ms` varies between calls.
pub fn handle_read(config: &ServiceConfig, body: &[u8]) -> Reply {
    let started = Instant::now();
    let req: ReadRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return reject(None, ErrorCode::MalformedBody, e.to_string()),
    };
    let request_id = req
        .request_id
        .clone()
        .unwrap_or_else(|| format!("req-{:016x}", fnv1a(body)));
    let id = Some(request_id.clone());

    let modes = [
        req.detections.is_some(),
        req.scene.is_some(),
        req.scene_id.is_some(),
        req.image.is_some(),
    ]
    .iter()
    .filter(|&&m| m)
    .count();
    match modes {
        0 => {
            return reject(id, ErrorCode::MissingInput, "one of detections, scene, scene_id or image is required")
        }
        1 => {}
        _ => {
            return reject(id, ErrorCode::AmbiguousInput, "give exactly one of detections, scene, scene_id or image")
        }
    }
    if req.noise.is_some() && (req.detections.is_some() || req.image.is_some()) {
        return reject(id, ErrorCode::AmbiguousInput, "noise applies only to scene and scene_id requests");
    }

    let options = ReadOptions { auto_orient: req.auto_orient.unwrap_or(true) };
    let result = if let Some(inline) = &req.detections {
        let sets = inline.rotations.iter().map(|r| (r.rotation, r.detections.clone()));
        match RecordedDetections::single(request_id.clone(), inline.dims, sets) {
            Ok(backend) => read_vitals_with(&backend, request_id.as_str(), options),
            Err(e) => return reject(id, ErrorCode::InvalidDetections, e.to_string()),
        }
    } else if let Some(image) = &req.image {
        let backend = ExternalModel { model_path: config.model_path.as_deref() };
        read_vitals_with(&backend, image.path.as_path(), options)
    } else {
        let scene = match (&req.scene, &req.scene_id) {
            (Some(s), _) => {
                if let Err(e) = s.validate() {
                    return reject(id, ErrorCode::InvalidScene, e.to_string());
                }
                s
            }
            (_, Some(sid)) => match config.corpus.get(sid) {
                Some(s) => s,
                None => return reject(id, ErrorCode::UnknownScene, format!("no scene {sid:?} in the served corpus")),
            },
            _ => unreachable!("exactly one mode is present"),
        };
        let noise = req.noise.unwrap_or_else(NoiseModel::zero);
        let backend = match MockDetector::new(noise, req.seed.unwrap_or(0)) {
            Ok(b) => b,
            Err(e) => return reject(id, ErrorCode::InvalidNoise, e.to_string()),
        };
        read_vitals_with(&backend, scene, options)
    };

    let status = match &result {
        Err(f) if f.backend_error.is_some() => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::OK,
    };
    Reply {
        status,
        body: ReplyBody::Read(ReadResponse {
            request_id,
            outcome: result.into(),
            processing_ms: started.elapsed().as_secs_f64() * 1000.0,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthStatus {
    Healthy,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
    pub backends: Vec<BackendCapability>,
    pub corpus_scenes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub fn handle_health(config: &ServiceConfig) -> Health {
    let mut backends = vec![
        MockDetector::noiseless().capability(),
        RecordedDetections::default().capability(),
    ];
    let (status, detail) = match (config.model_present(), &config.model_path) {
        (Some(false), Some(p)) => (
            HealthStatus::Degraded,
            Some(format!("external model {} not found; mock and inline detections only", p.display())),
        ),
        (Some(true), _) => {
            backends.push(ExternalModel { model_path: config.model_path.as_deref() }.capability());
            (HealthStatus::Healthy, None)
        }
        _ => (HealthStatus::Healthy, None),
    };
    Health {
        status,
        backends,
        corpus_scenes: config.corpus.len(),
        detail,
    }
}

async fn read_route(State(config): State<Arc<ServiceConfig>>, body: Bytes) -> Reply {
    handle_read(&config, &body)
}

async fn health_route(State(config): State<Arc<ServiceConfig>>) -> Json<Health> {
    Json(handle_health(&config))
}

pub fn router(config: Arc<ServiceConfig>) -> Router {
    Router::new()
        .route("/v1/read", post(read_route))
        .route("/health", get(health_route))
        .with_state(config)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
