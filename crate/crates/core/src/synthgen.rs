//! Deterministic ground-truth pulse-oximeter display scenes.
//!
//! A scene is pure geometry: labelled glyph boxes in the coordinates of the
//! captured photo, plus the true readings and the rotation that brings the
//! photo upright. Layout is first built upright and then turned by the
//! inverse of the true orientation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::GlyphClass;
use crate::geometry::{rotate_box, BBox, GeometryError, ImageDims, Rotation};

pub const SPO2_RANGE: std::ops::RangeInclusive<u32> = 70..=100;
pub const PR_RANGE: std::ops::RangeInclusive<u32> = 40..=300;
/// Normal saturation starts here; below it a reading is "low".
pub const NORMAL_SPO2_CUTOFF: u32 = 95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// SpO2 digits drawn taller than PR digits; no symbol glyphs.
    LargerSpo2,
    /// Equal digit heights with a `%`, `s` or `p` glyph next to the SpO2 group.
    EqualWithSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayKind {
    /// Seven-segment display.
    Ssd,
    /// Dot-matrix display.
    Dmd,
}

impl FromStr for DisplayKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ssd" => Ok(DisplayKind::Ssd),
            "dmd" => Ok(DisplayKind::Dmd),
            _ => Err(format!("unknown display kind {s:?}")),
        }
    }
}

/// Dataset group: display technology crossed with normal/low saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupTag {
    #[serde(rename = "SSD-N")]
    SsdN,
    #[serde(rename = "SSD-L")]
    SsdL,
    #[serde(rename = "DMD-N")]
    DmdN,
    #[serde(rename = "DMD-L")]
    DmdL,
}

impl GroupTag {
    pub const ALL: [GroupTag; 4] = [GroupTag::SsdN, GroupTag::SsdL, GroupTag::DmdN, GroupTag::DmdL];

    pub fn new(display: DisplayKind, spo2: u32) -> Self {
        let normal = spo2 >= NORMAL_SPO2_CUTOFF;
        match (display, normal) {
            (DisplayKind::Ssd, true) => GroupTag::SsdN,
            (DisplayKind::Ssd, false) => GroupTag::SsdL,
            (DisplayKind::Dmd, true) => GroupTag::DmdN,
            (DisplayKind::Dmd, false) => GroupTag::DmdL,
        }
    }

    pub fn display(&self) -> DisplayKind {
        match self {
            GroupTag::SsdN | GroupTag::SsdL => DisplayKind::Ssd,
            GroupTag::DmdN | GroupTag::DmdL => DisplayKind::Dmd,
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, GroupTag::SsdN | GroupTag::DmdN)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupTag::SsdN => "SSD-N",
            GroupTag::SsdL => "SSD-L",
            GroupTag::DmdN => "DMD-N",
            GroupTag::DmdL => "DMD-L",
        }
    }
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which on-screen number a glyph belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphRole {
    Spo2,
    Pr,
    /// Third number shown by some devices (e.g. perfusion index).
    Extra,
    Symbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledGlyph {
    pub class: GlyphClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<GlyphRole>,
}

/// A labelled display, either generated or loaded from annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub id: String,
    /// Dimensions of the captured image.
    pub dims: ImageDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutKind>,
    pub display: DisplayKind,
    pub spo2_true: u32,
    pub pr_true: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_value: Option<u32>,
    /// Glyphs in captured-image coordinates.
    pub glyphs: Vec<LabeledGlyph>,
    /// Rotation that turns the captured image upright.
    pub true_orientation: Rotation,
}

impl GroundTruthScene {
    /// Glyphs moved into the upright frame.
    pub fn upright_glyphs(&self) -> Vec<LabeledGlyph> {
        self.glyphs
            .iter()
            .map(|g| LabeledGlyph {
                bbox: rotate_box(&g.bbox, self.true_orientation, self.dims).unwrap_or(g.bbox),
                ..*g
            })
            .collect()
    }

    pub fn upright_dims(&self) -> ImageDims {
        self.dims.rotated(self.true_orientation)
    }

    pub fn group(&self) -> GroupTag {
        classify_group(self)
    }

    /// Every number shown on the display, as a multiset in ascending order.
    pub fn ground_numbers(&self) -> Vec<u64> {
        let mut v: Vec<u64> = [Some(self.spo2_true), Some(self.pr_true), self.extra_value]
            .into_iter()
            .flatten()
            .map(u64::from)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        check_vitals(self.spo2_true, self.pr_true)?;
        self.dims.validate()?;
        for g in &self.glyphs {
            g.bbox.validate()?;
            if !self.dims.contains(&g.bbox) {
                return Err(GeometryError::OutOfBounds {
                    bbox: g.bbox,
                    dims: self.dims,
                }
                .into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("SpO2 {0} outside [70, 100]")]
    Spo2OutOfRange(u32),
    #[error("pulse rate {0} outside [40, 300]")]
    PrOutOfRange(u32),
    #[error("layout does not fit in a {0} image")]
    DoesNotFit(ImageDims),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_vitals(spo2: u32, pr: u32) -> Result<(), SceneError> {
    if !SPO2_RANGE.contains(&spo2) {
        return Err(SceneError::Spo2OutOfRange(spo2));
    }
    if !PR_RANGE.contains(&pr) {
        return Err(SceneError::PrOutOfRange(pr));
    }
    Ok(())
}

/// Placement of the two vital groups relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    /// SpO2 row above the PR row, right-aligned.
    Stacked,
    /// SpO2 group left of the PR group on a shared baseline.
    SideBySide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRequest {
    pub layout: LayoutKind,
    pub display: DisplayKind,
    pub spo2: u32,
    pub pr: u32,
    pub orientation: Rotation,
    /// Captured image dimensions.
    pub dims: ImageDims,
    /// Value of a third on-screen number, if any.
    pub extra: Option<u32>,
    /// Fixed arrangement; chosen from the seed when `None`.
    pub arrangement: Option<Arrangement>,
    pub id: Option<String>,
}

impl SceneRequest {
    pub fn new(layout: LayoutKind, display: DisplayKind, spo2: u32, pr: u32, orientation: Rotation) -> Self {
        Self {
            layout,
            display,
            spo2,
            pr,
            orientation,
            dims: ImageDims::square(640),
            extra: None,
            arrangement: None,
            id: None,
        }
    }

    pub fn with_extra(mut self, value: u32) -> Self {
        self.extra = Some(value);
        self
    }

    pub fn with_dims(mut self, dims: ImageDims) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_arrangement(mut self, arrangement: Arrangement) -> Self {
        self.arrangement = Some(arrangement);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// Digit glyph geometry relative to the digit width.
const DIGIT_GAP: f64 = 0.2;
const ASPECT: (f64, f64) = (0.45, 0.65);
const GROUP_GAP: (f64, f64) = (1.5, 2.2);
const SPO2_HEIGHT_RATIO: (f64, f64) = (1.31, 1.7);
const EXTRA_HEIGHT_RATIO: f64 = 0.55;
const SYMBOL_HEIGHT_RATIO: f64 = 0.45;
/// Smallest glyph height, in pixels, that still counts as legible.
const MIN_GLYPH_PX: f64 = 4.0;

/// Quantise to 1/64 px so rotations stay exact in binary floating point.
fn quantize(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

fn digits_of(value: u32) -> Vec<u8> {
    value.to_string().bytes().map(|b| b - b'0').collect()
}

/// One run of digits laid out left to right on a shared baseline.
struct Row {
    digits: Vec<u8>,
    height: f64,
    width: f64,
    role: GlyphRole,
}

impl Row {
    fn new(value: u32, height: f64, aspect: f64, role: GlyphRole) -> Self {
        Self {
            digits: digits_of(value),
            height,
            width: height * aspect,
            role,
        }
    }

    fn span(&self) -> f64 {
        let n = self.digits.len() as f64;
        n * self.width + (n - 1.0) * DIGIT_GAP * self.width
    }

    /// Boxes with the row's top-left corner at `(x, y)`.
    fn place(&self, x: f64, y: f64) -> Vec<(GlyphClass, [f64; 4], GlyphRole)> {
        self.digits
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let x0 = x + i as f64 * self.width * (1.0 + DIGIT_GAP);
                (
                    GlyphClass::Digit(*d),
                    [x0, y, x0 + self.width, y + self.height],
                    self.role,
                )
            })
            .collect()
    }
}

fn upright_layout(
    req: &SceneRequest,
    arrangement: Arrangement,
    rng: &mut ChaCha8Rng,
    upright: ImageDims,
) -> Vec<(GlyphClass, [f64; 4], GlyphRole)> {
    let scale = f64::from(upright.width.min(upright.height));
    let pr_height = rng.gen_range(0.06..0.09) * scale;
    let aspect = rng.gen_range(ASPECT.0..ASPECT.1);
    let ratio = match req.layout {
        LayoutKind::LargerSpo2 => rng.gen_range(SPO2_HEIGHT_RATIO.0..SPO2_HEIGHT_RATIO.1),
        LayoutKind::EqualWithSymbol => 1.0,
    };
    let gap_factor = rng.gen_range(GROUP_GAP.0..GROUP_GAP.1);
    let symbol_pick = rng.gen_range(0..3usize);

    let spo2 = Row::new(req.spo2, pr_height * ratio, aspect, GlyphRole::Spo2);
    let pr = Row::new(req.pr, pr_height, aspect, GlyphRole::Pr);
    let wide = spo2.width.max(pr.width);
    let gap = gap_factor * wide;

    let mut glyphs = Vec::new();
    let (spo2_x, pr_x, pr_y, bottom, right);
    match arrangement {
        Arrangement::Stacked => {
            right = spo2.span().max(pr.span());
            spo2_x = right - spo2.span();
            pr_x = right - pr.span();
            pr_y = spo2.height + gap;
            bottom = pr_y + pr.height;
        }
        Arrangement::SideBySide => {
            spo2_x = 0.0;
            pr_x = spo2.span() + gap;
            pr_y = spo2.height - pr.height;
            right = pr_x + pr.span();
            bottom = spo2.height;
        }
    }
    glyphs.extend(spo2.place(spo2_x, 0.0));
    glyphs.extend(pr.place(pr_x, pr_y));

    if let Some(value) = req.extra {
        let extra = Row::new(value, pr_height * EXTRA_HEIGHT_RATIO, aspect, GlyphRole::Extra);
        glyphs.extend(extra.place(right - extra.span(), bottom + gap));
    }

    if req.layout == LayoutKind::EqualWithSymbol {
        let class = [GlyphClass::Percent, GlyphClass::LetterS, GlyphClass::LetterP][symbol_pick];
        let h = spo2.height * SYMBOL_HEIGHT_RATIO;
        let w = h * 0.8;
        let x1 = spo2_x - 0.3 * spo2.width;
        glyphs.push((class, [x1 - w, 0.0, x1, h], GlyphRole::Symbol));
    }
    glyphs
}

/// Builds a scene; glyph geometry depends only on the request and `seed`.
pub fn generate_scene(req: &SceneRequest, seed: u64) -> Result<GroundTruthScene, SceneError> {
    check_vitals(req.spo2, req.pr)?;
    req.dims.validate()?;
    let upright = req.dims.rotated(req.orientation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preferred = req.arrangement.unwrap_or(if rng.gen_bool(0.5) {
        Arrangement::Stacked
    } else {
        Arrangement::SideBySide
    });
    let layout_seed: u64 = rng.gen();

    let margin = 0.02 * f64::from(upright.width.min(upright.height));
    let candidates: &[Arrangement] = match (req.arrangement, preferred) {
        (Some(_), a) => &[a][..],
        (None, Arrangement::Stacked) => &[Arrangement::Stacked, Arrangement::SideBySide],
        (None, Arrangement::SideBySide) => &[Arrangement::SideBySide, Arrangement::Stacked],
    };

    for &arrangement in candidates {
        let mut layout_rng = ChaCha8Rng::seed_from_u64(layout_seed);
        let raw = upright_layout(req, arrangement, &mut layout_rng, upright);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (_, b, _) in &raw {
            x0 = x0.min(b[0]);
            y0 = y0.min(b[1]);
            x1 = x1.max(b[2]);
            y1 = y1.max(b[3]);
        }
        let free_x = upright.w() - (x1 - x0) - 2.0 * margin;
        let free_y = upright.h() - (y1 - y0) - 2.0 * margin;
        let smallest = raw.iter().map(|(_, b, _)| b[3] - b[1]).fold(f64::MAX, f64::min);
        if free_x < 0.0 || free_y < 0.0 || smallest < MIN_GLYPH_PX {
            continue;
        }
        let dx = margin - x0 + layout_rng.gen::<f64>() * free_x;
        let dy = margin - y0 + layout_rng.gen::<f64>() * free_y;

        let back = req.orientation.inverse();
        let glyphs = raw
            .into_iter()
            .map(|(class, b, role)| {
                // corner and size rounded separately so equal sizes stay equal
                let (x, y) = (quantize(b[0] + dx), quantize(b[1] + dy));
                let upright_box = BBox::new(x, y, x + quantize(b[2] - b[0]), y + quantize(b[3] - b[1]))?;
                Ok(LabeledGlyph {
                    class,
                    bbox: rotate_box(&upright_box, back, upright)?,
                    role: Some(role),
                })
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;

        return Ok(GroundTruthScene {
            id: req.id.clone().unwrap_or_else(|| format!("scene-{seed}")),
            dims: req.dims,
            layout: Some(req.layout),
            display: req.display,
            spo2_true: req.spo2,
            pr_true: req.pr,
            extra_value: req.extra,
            glyphs,
            true_orientation: req.orientation,
        });
    }
    Err(SceneError::DoesNotFit(req.dims))
}

/// Group tag of a scene: display kind plus normal (≥ 95 %) or low saturation.
pub fn classify_group(scene: &GroundTruthScene) -> GroupTag {
    GroupTag::new(scene.display, scene.spo2_true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    /// Every scene is captured upright.
    Upright,
    /// True orientation drawn uniformly from the four quarter turns.
    Random,
}

impl FromStr for OrientationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upright" => Ok(OrientationMode::Upright),
            "random" => Ok(OrientationMode::Random),
            _ => Err(format!("unknown orientation mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub per_group: usize,
    pub dims: ImageDims,
    pub orientation: OrientationMode,
    /// Probability that a scene shows a third, two-digit number.
    pub extra_group_rate: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            per_group: 125,
            dims: ImageDims::square(640),
            orientation: OrientationMode::Random,
            extra_group_rate: 0.0,
            seed: 0,
        }
    }
}

/// Balanced corpus: `per_group` scenes for each of the four groups, in
/// group order.
///
/// Without a third number, six-digit displays (SpO2 100 with a three-digit
/// PR) are not sampled: the reader requests three clusters for any display
/// with six or more digits.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<GroundTruthScene>, SceneError> {
    let mut scenes = Vec::with_capacity(config.per_group * GroupTag::ALL.len());
    for (g, group) in GroupTag::ALL.into_iter().enumerate() {
        for i in 0..config.per_group {
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.seed ^ ((g as u64) << 56) ^ (i as u64).wrapping_mul(0x9e37_79b9),
            );
            let spo2 = if group.is_normal() {
                rng.gen_range(NORMAL_SPO2_CUTOFF..=100)
            } else {
                rng.gen_range(70..NORMAL_SPO2_CUTOFF)
            };
            let extra = rng
                .gen_bool(config.extra_group_rate.clamp(0.0, 1.0))
                .then(|| rng.gen_range(10..40));
            let pr_max = if spo2 >= 100 && extra.is_none() { 99 } else { 300 };
            let pr = rng.gen_range(40..=pr_max);
            let layout = *[LayoutKind::LargerSpo2, LayoutKind::EqualWithSymbol]
                .choose(&mut rng)
                .expect("non-empty");
            let orientation = match config.orientation {
                OrientationMode::Upright => Rotation::R0,
                OrientationMode::Random => Rotation::from_quarter_turns(rng.gen_range(0..4)),
            };
            let mut req = SceneRequest::new(layout, group.display(), spo2, pr, orientation)
                .with_dims(config.dims)
                .with_id(format!("{group}-{i:04}"));
            req.extra = extra;
            scenes.push(generate_scene(&req, rng.gen())?);
        }
    }
    Ok(scenes)
}
