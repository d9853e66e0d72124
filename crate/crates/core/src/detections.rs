//! Glyph detections and the detector abstraction.
//!
//! Algorithm code never talks to a network directly: it asks a
//! [`DetectorBackend`] for the digit and symbol detections of an image
//! rotated by one of the four quarter turns. [`MockDetector`] drives the
//! whole pipeline from ground-truth scenes with a seeded noise model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotate_box, BBox, GeometryError, ImageDims, Rotation};
use crate::synthgen::GroundTruthScene;

/// Detector input resolutions (square side, pixels).
pub const SUPPORTED_RESOLUTIONS: [u32; 2] = [640, 1280];

/// One of the 13 glyph classes a detector can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GlyphClass {
    Digit(u8),
    Percent,
    LetterS,
    LetterP,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown glyph class {0:?}")]
pub struct UnknownGlyph(pub String);

impl GlyphClass {
    pub const COUNT: usize = 13;

    pub fn digit(d: u8) -> Option<Self> {
        (d <= 9).then_some(GlyphClass::Digit(d))
    }

    pub fn is_digit(&self) -> bool {
        matches!(self, GlyphClass::Digit(_))
    }

    pub fn is_symbol(&self) -> bool {
        !self.is_digit()
    }

    pub fn digit_value(&self) -> Option<u8> {
        match self {
            GlyphClass::Digit(d) => Some(*d),
            _ => None,
        }
    }

    /// Dense class id: digits 0–9, then `%` = 10, `s` = 11, `p` = 12.
    pub fn index(&self) -> usize {
        match self {
            GlyphClass::Digit(d) => usize::from(*d),
            GlyphClass::Percent => 10,
            GlyphClass::LetterS => 11,
            GlyphClass::LetterP => 12,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0..=9 => Some(GlyphClass::Digit(index as u8)),
            10 => Some(GlyphClass::Percent),
            11 => Some(GlyphClass::LetterS),
            12 => Some(GlyphClass::LetterP),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = GlyphClass> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }

    pub fn label(&self) -> &'static str {
        const LABELS: [&str; 13] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "%", "s", "p"];
        LABELS[self.index()]
    }
}

impl fmt::Display for GlyphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GlyphClass {
    type Err = UnknownGlyph;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "%" => Ok(GlyphClass::Percent),
            "s" => Ok(GlyphClass::LetterS),
            "p" => Ok(GlyphClass::LetterP),
            _ => s
                .parse::<u8>()
                .ok()
                .filter(|_| s.len() == 1)
                .and_then(GlyphClass::digit)
                .ok_or_else(|| UnknownGlyph(s.to_string())),
        }
    }
}

impl TryFrom<String> for GlyphClass {
    type Error = UnknownGlyph;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GlyphClass> for String {
    fn from(g: GlyphClass) -> Self {
        g.label().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class", alias = "glyph")]
    pub glyph: GlyphClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<(), DetectionError> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(DetectionError::Confidence(self.confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("box {bbox} outside rotated image {dims}")]
    OutOfImage { bbox: BBox, dims: ImageDims },
}

/// Detections of one image at one rotation. `dims` are the rotated image's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
    pub dims: ImageDims,
    pub rotation_applied: Rotation,
}

impl DetectionSet {
    pub fn empty(dims: ImageDims, rotation_applied: Rotation) -> Self {
        Self {
            detections: Vec::new(),
            dims,
            rotation_applied,
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn confidences(&self) -> impl Iterator<Item = f64> + '_ {
        self.detections.iter().map(|d| d.confidence)
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        self.dims.validate()?;
        for d in &self.detections {
            d.validate()?;
            if !self.dims.contains(&d.bbox) {
                return Err(DetectionError::OutOfImage {
                    bbox: d.bbox,
                    dims: self.dims,
                });
            }
        }
        Ok(())
    }

    /// Splits into (digits, symbols), preserving order.
    pub fn split_digits_symbols(self) -> (DetectionSet, DetectionSet) {
        let (digits, symbols): (Vec<_>, Vec<_>) =
            self.detections.into_iter().partition(|d| d.glyph.is_digit());
        (
            DetectionSet {
                detections: digits,
                dims: self.dims,
                rotation_applied: self.rotation_applied,
            },
            DetectionSet {
                detections: symbols,
                dims: self.dims,
                rotation_applied: self.rotation_applied,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum BackendError {
    #[error("model unavailable: {0}")]
    ModelMissing(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("no detections recorded for image {0:?}")]
    UnknownImage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapability {
    pub name: String,
    pub resolutions: Vec<u32>,
    /// Whether the backend can be called from several threads at once.
    pub concurrent: bool,
}

/// A source of per-rotation glyph detections for one kind of input.
///
/// Implementations must be deterministic: identical input, rotation and
/// configuration yield identical detection sets. An empty set is a valid
/// answer and is distinct from an error.
pub trait DetectorBackend: Send + Sync {
    type Input: ?Sized;

    fn capability(&self) -> BackendCapability;

    /// Digit detections of `input` rotated by `rotation`.
    fn detect(&self, input: &Self::Input, rotation: Rotation) -> Result<DetectionSet, BackendError>;

    /// `%`, `s` and `p` detections of `input` rotated by `rotation`.
    fn detect_symbols(
        &self,
        input: &Self::Input,
        rotation: Rotation,
    ) -> Result<DetectionSet, BackendError>;
}

impl<B: DetectorBackend + ?Sized> DetectorBackend for &B {
    type Input = B::Input;

    fn capability(&self) -> BackendCapability {
        (**self).capability()
    }

    fn detect(&self, input: &Self::Input, rotation: Rotation) -> Result<DetectionSet, BackendError> {
        (**self).detect(input, rotation)
    }

    fn detect_symbols(
        &self,
        input: &Self::Input,
        rotation: Rotation,
    ) -> Result<DetectionSet, BackendError> {
        (**self).detect_symbols(input, rotation)
    }
}

/// Noise applied by [`mock_detect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Confidence band at the scene's true orientation.
    pub high_band: (f64, f64),
    /// Confidence band at the three wrong orientations.
    pub low_band: (f64, f64),
    /// Fraction of each band's half-width that confidences are drawn from,
    /// centred on the band midpoint. 0 pins every confidence to the midpoint.
    pub confidence_spread: f64,
    /// Probability that a glyph is not detected at all.
    pub dropout: f64,
    /// Maximum box-centre displacement per axis, as a fraction of glyph height.
    pub jitter: f64,
    /// Probability that a 6/9 is read as the other when the image is upside
    /// down. Digits 3, 4 and 7 are dropped with the same probability.
    pub confusion: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            high_band: (0.70, 0.95),
            low_band: (0.10, 0.50),
            confidence_spread: 1.0,
            dropout: 0.1,
            jitter: 0.05,
            confusion: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("noise parameter {name} = {value} out of range")]
pub struct NoiseError {
    pub name: &'static str,
    pub value: f64,
}

impl NoiseModel {
    /// Noiseless detection: exact boxes, band-midpoint confidences, no dropout.
    pub fn zero() -> Self {
        Self {
            confidence_spread: 0.0,
            dropout: 0.0,
            jitter: 0.0,
            confusion: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(NoiseError { name, value })
            }
        };
        for (name, (lo, hi)) in [("high_band", self.high_band), ("low_band", self.low_band)] {
            unit(name, lo)?;
            unit(name, hi)?;
            if lo > hi {
                return Err(NoiseError { name, value: lo });
            }
        }
        unit("confidence_spread", self.confidence_spread)?;
        unit("dropout", self.dropout)?;
        unit("confusion", self.confusion)?;
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(NoiseError {
                name: "jitter",
                value: self.jitter,
            });
        }
        Ok(())
    }

    fn draw_confidence(&self, correct: bool, u: f64) -> f64 {
        let (lo, hi) = if correct { self.high_band } else { self.low_band };
        let mid = (lo + hi) / 2.0;
        let half = (hi - lo) / 2.0 * self.confidence_spread;
        (mid + (2.0 * u - 1.0) * half).clamp(lo, hi)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-(scene, rotation) RNG so that each rotation's draw is independent of
/// which other rotations were queried.
fn mock_rng(scene: &GroundTruthScene, rotation: Rotation, seed: u64) -> ChaCha8Rng {
    let mixed = splitmix(seed ^ splitmix(fnv1a(scene.id.as_bytes())))
        ^ splitmix(u64::from(rotation.quarter_turns()) + 1);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn confuse_upside_down(digit: u8) -> Option<u8> {
    match digit {
        6 => Some(9),
        9 => Some(6),
        0 | 1 | 2 | 5 | 8 => Some(digit),
        _ => None,
    }
}

/// Shift `b` the least amount needed to lie inside `dims`.
fn clamp_into(b: BBox, dims: ImageDims) -> BBox {
    let dx = if b.x_min < 0.0 {
        -b.x_min
    } else if b.x_max > dims.w() {
        dims.w() - b.x_max
    } else {
        0.0
    };
    let dy = if b.y_min < 0.0 {
        -b.y_min
    } else if b.y_max > dims.h() {
        dims.h() - b.y_max
    } else {
        0.0
    };
    b.translated(dx, dy)
}

/// Simulated detector output for `scene` rotated by `rotation`.
///
/// Emits every glyph (digits and symbols) at its ground-truth box moved into
/// the rotated frame. Confidences come from the high band when `rotation`
/// equals the scene's true orientation and from the low band otherwise.
pub fn mock_detect(
    scene: &GroundTruthScene,
    rotation: Rotation,
    noise: &NoiseModel,
    seed: u64,
) -> DetectionSet {
    let mut rng = mock_rng(scene, rotation, seed);
    let dims = scene.dims.rotated(rotation);
    let correct = rotation == scene.true_orientation;
    let upside_down = rotation == scene.true_orientation.then(Rotation::R180);
    let mut detections = Vec::with_capacity(scene.glyphs.len());

    for glyph in &scene.glyphs {
        // fixed number of draws per glyph keeps streams aligned across noise settings
        let [u_drop, u_conf, u_jx, u_jy, u_confuse]: [f64; 5] = std::array::from_fn(|_| rng.gen());
        if u_drop < noise.dropout {
            continue;
        }
        let mut class = glyph.class;
        if upside_down && u_confuse < noise.confusion {
            if let GlyphClass::Digit(d) = class {
                match confuse_upside_down(d) {
                    Some(seen) => class = GlyphClass::Digit(seen),
                    None => continue,
                }
            }
        }
        let Ok(mut bbox) = rotate_box(&glyph.bbox, rotation, scene.dims) else {
            continue;
        };
        if noise.jitter > 0.0 {
            let reach = noise.jitter * bbox.height();
            bbox = clamp_into(
                bbox.translated((2.0 * u_jx - 1.0) * reach, (2.0 * u_jy - 1.0) * reach),
                dims,
            );
        }
        detections.push(Detection {
            glyph: class,
            bbox,
            confidence: noise.draw_confidence(correct, u_conf),
        });
    }

    DetectionSet {
        detections,
        dims,
        rotation_applied: rotation,
    }
}

/// Detector backend that simulates a trained network from ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MockDetector {
    pub noise: NoiseModel,
    pub seed: u64,
}

impl MockDetector {
    pub fn new(noise: NoiseModel, seed: u64) -> Result<Self, NoiseError> {
        noise.validate()?;
        Ok(Self { noise, seed })
    }

    pub fn noiseless() -> Self {
        Self {
            noise: NoiseModel::zero(),
            seed: 0,
        }
    }
}

impl DetectorBackend for MockDetector {
    type Input = GroundTruthScene;

    fn capability(&self) -> BackendCapability {
        BackendCapability {
            name: "mock".into(),
            resolutions: SUPPORTED_RESOLUTIONS.to_vec(),
            concurrent: true,
        }
    }

    fn detect(&self, scene: &GroundTruthScene, rotation: Rotation) -> Result<DetectionSet, BackendError> {
        Ok(mock_detect(scene, rotation, &self.noise, self.seed)
            .split_digits_symbols()
            .0)
    }

    fn detect_symbols(
        &self,
        scene: &GroundTruthScene,
        rotation: Rotation,
    ) -> Result<DetectionSet, BackendError> {
        Ok(mock_detect(scene, rotation, &self.noise, self.seed)
            .split_digits_symbols()
            .1)
    }
}
