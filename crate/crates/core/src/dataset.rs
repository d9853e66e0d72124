//! Annotation files, group balancing and cross-validation splits.
//!
//! Two annotation formats are read. The native format is line-delimited
//! JSON: a corpus header, then per image one `image` record followed by one
//! `glyph` record per labelled glyph. The normalized-box text format has a
//! `@` header line per image followed by `class cx cy w h` lines with
//! coordinates as fractions of the image size. Both are specified in
//! `docs/formats.md`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::GlyphClass;
use crate::geometry::{BBox, ImageDims, Rotation};
use crate::synthgen::{
    classify_group, DisplayKind, GlyphRole, GroundTruthScene, GroupTag, LabeledGlyph, LayoutKind,
};

pub const NATIVE_FORMAT_NAME: &str = "pulseox-corpus";
pub const NATIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("group {group} has {available} images, {requested} requested")]
    InsufficientGroup {
        group: GroupTag,
        available: usize,
        requested: usize,
    },
    #[error("cannot split {images} images into {folds} folds")]
    BadFolds { folds: usize, images: usize },
}

impl DatasetError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        DatasetError::Parse { line, message: message.into() }
    }

    fn invalid(line: usize, message: impl Into<String>) -> Self {
        DatasetError::Validation { line, message: message.into() }
    }
}

/// Anything that belongs to one dataset group and has a stable id.
pub trait Grouped {
    fn id(&self) -> &str;
    fn group(&self) -> GroupTag;
}

impl Grouped for GroundTruthScene {
    fn id(&self) -> &str {
        &self.id
    }
    fn group(&self) -> GroupTag {
        classify_group(self)
    }
}

/// A labelled image with its group tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub scene: GroundTruthScene,
    pub group: GroupTag,
}

impl AnnotatedImage {
    pub fn new(scene: GroundTruthScene) -> Self {
        let group = classify_group(&scene);
        Self { scene, group }
    }
}

impl Grouped for AnnotatedImage {
    fn id(&self) -> &str {
        &self.scene.id
    }
    fn group(&self) -> GroupTag {
        self.group
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    NativeLines,
    NormalizedBoxText,
}

impl std::str::FromStr for AnnotationFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" | "native-lines" => Ok(AnnotationFormat::NativeLines),
            "normalized" | "normalized-box-text" => Ok(AnnotationFormat::NormalizedBoxText),
            _ => Err(format!("unknown annotation format {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum NativeRecord {
    Corpus {
        format: String,
        version: u32,
        images: usize,
    },
    Image {
        id: String,
        width: u32,
        height: u32,
        display: DisplayKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        layout: Option<LayoutKind>,
        spo2: u32,
        pr: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extra: Option<u32>,
        orientation: Rotation,
        group: GroupTag,
    },
    Glyph {
        image: String,
        class: GlyphClass,
        #[serde(rename = "box")]
        bbox: [f64; 4],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<GlyphRole>,
    },
}

fn line_of<T: Serialize>(record: &T) -> String {
    serde_json::to_string(record).expect("records serialise")
}

/// The native line format for a list of scenes.
pub fn to_native_lines(scenes: &[GroundTruthScene]) -> String {
    let mut out = String::new();
    let header = NativeRecord::Corpus {
        format: NATIVE_FORMAT_NAME.into(),
        version: NATIVE_FORMAT_VERSION,
        images: scenes.len(),
    };
    out.push_str(&line_of(&header));
    out.push('\n');
    for s in scenes {
        let image = NativeRecord::Image {
            id: s.id.clone(),
            width: s.dims.width,
            height: s.dims.height,
            display: s.display,
            layout: s.layout,
            spo2: s.spo2_true,
            pr: s.pr_true,
            extra: s.extra_value,
            orientation: s.true_orientation,
            group: classify_group(s),
        };
        out.push_str(&line_of(&image));
        out.push('\n');
        for g in &s.glyphs {
            let glyph = NativeRecord::Glyph {
                image: s.id.clone(),
                class: g.class,
                bbox: g.bbox.into(),
                role: g.role,
            };
            out.push_str(&line_of(&glyph));
            out.push('\n');
        }
    }
    out
}

/// One CSV row per image: id, group, width, height, orientation, glyph count.
pub fn manifest_csv(scenes: &[GroundTruthScene]) -> String {
    let mut out = String::from("id,group,width,height,orientation,glyphs\n");
    for s in scenes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.id,
            classify_group(s),
            s.dims.width,
            s.dims.height,
            s.true_orientation,
            s.glyphs.len()
        );
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Writes the corpus in the native format and returns the bytes written.
pub fn write_corpus(path: &Path, scenes: &[GroundTruthScene]) -> Result<usize, DatasetError> {
    let text = to_native_lines(scenes);
    std::fs::write(path, &text).map_err(io_err(path))?;
    Ok(text.len())
}

pub fn load_annotations(path: &Path, format: AnnotationFormat) -> Result<Vec<AnnotatedImage>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&text, format)
}

pub fn parse_annotations(text: &str, format: AnnotationFormat) -> Result<Vec<AnnotatedImage>, DatasetError> {
    let scenes = match format {
        AnnotationFormat::NativeLines => parse_native(text)?,
        AnnotationFormat::NormalizedBoxText => parse_normalized(text)?,
    };
    Ok(scenes.into_iter().map(AnnotatedImage::new).collect())
}

/// Image under construction together with the line that opened it.
struct Pending {
    line: usize,
    scene: GroundTruthScene,
}

fn finish(pending: Pending, seen: &mut HashSet<String>, out: &mut Vec<GroundTruthScene>) -> Result<(), DatasetError> {
    pending
        .scene
        .validate()
        .map_err(|e| DatasetError::invalid(pending.line, format!("image {:?}: {e}", pending.scene.id)))?;
    if !seen.insert(pending.scene.id.clone()) {
        return Err(DatasetError::DuplicateId(pending.scene.id));
    }
    out.push(pending.scene);
    Ok(())
}

fn checked_box(line: usize, raw: [f64; 4], dims: ImageDims) -> Result<BBox, DatasetError> {
    let bbox = BBox::new(raw[0], raw[1], raw[2], raw[3]).map_err(|e| DatasetError::invalid(line, e.to_string()))?;
    if !dims.contains(&bbox) {
        return Err(DatasetError::invalid(line, format!("box {bbox} outside {}x{} image", dims.width, dims.height)));
    }
    Ok(bbox)
}

fn parse_native(text: &str) -> Result<Vec<GroundTruthScene>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut declared: Option<(usize, usize)> = None;
    let mut current: Option<Pending> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: NativeRecord = serde_json::from_str(raw).map_err(|e| DatasetError::parse(line, e.to_string()))?;
        match record {
            NativeRecord::Corpus { format, version, images } => {
                if declared.is_some() || current.is_some() || !out.is_empty() {
                    return Err(DatasetError::parse(line, "corpus header must be the first record"));
                }
                if format != NATIVE_FORMAT_NAME || version != NATIVE_FORMAT_VERSION {
                    return Err(DatasetError::parse(line, format!("unsupported format {format:?} version {version}")));
                }
                declared = Some((line, images));
            }
            NativeRecord::Image { id, width, height, display, layout, spo2, pr, extra, orientation, group } => {
                if declared.is_none() {
                    return Err(DatasetError::parse(line, "image record before corpus header"));
                }
                if let Some(p) = current.take() {
                    finish(p, &mut seen, &mut out)?;
                }
                let dims = ImageDims::new(width, height).map_err(|e| DatasetError::invalid(line, e.to_string()))?;
                let scene = GroundTruthScene {
                    id,
                    dims,
                    layout,
                    display,
                    spo2_true: spo2,
                    pr_true: pr,
                    extra_value: extra,
                    glyphs: Vec::new(),
                    true_orientation: orientation,
                };
                if classify_group(&scene) != group {
                    return Err(DatasetError::invalid(
                        line,
                        format!("group {group} disagrees with display and SpO2 ({})", classify_group(&scene)),
                    ));
                }
                current = Some(Pending { line, scene });
            }
            NativeRecord::Glyph { image, class, bbox, role } => {
                let Some(p) = current.as_mut() else {
                    return Err(DatasetError::parse(line, "glyph record before any image"));
                };
                if p.scene.id != image {
                    return Err(DatasetError::parse(
                        line,
                        format!("glyph for {image:?} inside image {:?}", p.scene.id),
                    ));
                }
                let bbox = checked_box(line, bbox, p.scene.dims)?;
                p.scene.glyphs.push(LabeledGlyph { class, bbox, role });
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut seen, &mut out)?;
    }
    match declared {
        None => Err(DatasetError::parse(1, "missing corpus header")),
        Some((line, n)) if n != out.len() => Err(DatasetError::invalid(
            line,
            format!("header declares {n} images, file has {}", out.len()),
        )),
        Some(_) => Ok(out),
    }
}

fn field<T: std::str::FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<T, DatasetError> {
    let token = token.ok_or_else(|| DatasetError::parse(line, format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| DatasetError::parse(line, format!("bad {what} {token:?}")))
}

fn parse_normalized(text: &str) -> Result<Vec<GroundTruthScene>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<Pending> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        if let Some(rest) = trimmed.strip_prefix('@') {
            let mut tokens = rest.split_whitespace();
            let id: String = field(line, tokens.next(), "image id")?;
            let width: u32 = field(line, tokens.next(), "width")?;
            let height: u32 = field(line, tokens.next(), "height")?;
            let display: DisplayKind = field(line, tokens.next(), "display")?;
            let spo2: u32 = field(line, tokens.next(), "SpO2")?;
            let pr: u32 = field(line, tokens.next(), "pulse rate")?;
            let orientation = match tokens.next() {
                None => Rotation::R0,
                Some(t) => {
                    let deg: i64 = field(line, Some(t), "orientation")?;
                    Rotation::from_degrees(deg).map_err(|e| DatasetError::parse(line, e.to_string()))?
                }
            };
            if let Some(t) = tokens.next() {
                return Err(DatasetError::parse(line, format!("unexpected field {t:?}")));
            }
            if let Some(p) = current.take() {
                finish(p, &mut seen, &mut out)?;
            }
            let dims = ImageDims::new(width, height).map_err(|e| DatasetError::invalid(line, e.to_string()))?;
            current = Some(Pending {
                line,
                scene: GroundTruthScene {
                    id,
                    dims,
                    layout: None,
                    display,
                    spo2_true: spo2,
                    pr_true: pr,
                    extra_value: None,
                    glyphs: Vec::new(),
                    true_orientation: orientation,
                },
            });
            continue;
        }

        let Some(p) = current.as_mut() else {
            return Err(DatasetError::parse(line, "box line before any @ header"));
        };
        let class_id: usize = field(line, tokens.next(), "class id")?;
        let class = GlyphClass::from_index(class_id)
            .ok_or_else(|| DatasetError::parse(line, format!("class id {class_id} outside 0..{}", GlyphClass::COUNT)))?;
        let mut v = [0.0f64; 4];
        for (slot, what) in v.iter_mut().zip(["cx", "cy", "w", "h"]) {
            *slot = field(line, tokens.next(), what)?;
        }
        if let Some(t) = tokens.next() {
            return Err(DatasetError::parse(line, format!("unexpected field {t:?}")));
        }
        let [cx, cy, w, h] = v;
        let (iw, ih) = (p.scene.dims.w(), p.scene.dims.h());
        let raw = [
            cx * iw - w * iw / 2.0,
            cy * ih - h * ih / 2.0,
            cx * iw + w * iw / 2.0,
            cy * ih + h * ih / 2.0,
        ];
        let bbox = checked_box(line, raw, p.scene.dims)?;
        p.scene.glyphs.push(LabeledGlyph { class, bbox, role: None });
    }
    if let Some(p) = current.take() {
        finish(p, &mut seen, &mut out)?;
    }
    Ok(out)
}

/// Indices of each group, in group order, preserving input order inside a group.
fn by_group<T: Grouped>(items: &[T]) -> BTreeMap<GroupTag, Vec<usize>> {
    let mut groups: BTreeMap<GroupTag, Vec<usize>> = GroupTag::ALL.iter().map(|&g| (g, Vec::new())).collect();
    for (i, item) in items.iter().enumerate() {
        groups.entry(item.group()).or_default().push(i);
    }
    groups
}

/// Keeps exactly `per_group` items of every group, drawn uniformly without
/// replacement. Output lists groups in order, each in input order.
pub fn undersample_balance<T: Grouped + Clone>(
    items: &[T],
    per_group: usize,
    seed: u64,
) -> Result<Vec<T>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_group * GroupTag::ALL.len());
    for (group, members) in by_group(items) {
        if members.len() < per_group {
            return Err(DatasetError::InsufficientGroup {
                group,
                available: members.len(),
                requested: per_group,
            });
        }
        let mut picked: Vec<usize> = sample(&mut rng, members.len(), per_group).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|p| items[members[p]].clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub id: String,
    pub group: GroupTag,
    pub fold: usize,
}

/// Fold index of every image, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: usize,
    pub seed: u64,
    pub assignments: Vec<FoldAssignment>,
}

impl SplitPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.iter().find(|a| a.id == id).map(|a| a.fold)
    }

    pub fn validation_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.fold == fold)
            .map(|a| a.id.as_str())
            .collect()
    }

    pub fn training_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.fold != fold)
            .map(|a| a.id.as_str())
            .collect()
    }

    /// Count per (fold, group).
    pub fn counts(&self) -> BTreeMap<(usize, GroupTag), usize> {
        let mut c = BTreeMap::new();
        for a in &self.assignments {
            *c.entry((a.fold, a.group)).or_default() += 1;
        }
        c
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for a in &self.assignments {
            out.push_str(&line_of(a));
            out.push('\n');
        }
        out
    }
}

/// Stratified k-fold split. Each group is shuffled, then dealt round-robin
/// with the dealing position carried from one group to the next, so both
/// per-group and total fold sizes differ by at most one.
pub fn kfold_split<T: Grouped>(items: &[T], folds: usize, seed: u64) -> Result<SplitPlan, DatasetError> {
    if folds < 2 || folds > items.len() {
        return Err(DatasetError::BadFolds { folds, images: items.len() });
    }
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.id()) {
            return Err(DatasetError::DuplicateId(item.id().to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; items.len()];
    let mut next = 0usize;
    for (_, mut members) in by_group(items) {
        members.shuffle(&mut rng);
        for idx in members {
            fold_of[idx] = next % folds;
            next += 1;
        }
    }
    let assignments = items
        .iter()
        .zip(fold_of)
        .map(|(item, fold)| FoldAssignment {
            id: item.id().to_string(),
            group: item.group(),
            fold,
        })
        .collect();
    Ok(SplitPlan { folds, seed, assignments })
}
