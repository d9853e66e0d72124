//! Command-line front end.
//!
//! Every subcommand writes machine-readable JSON lines by default and a
//! plain table with `--format table`. Flags can also be set through
//! `PULSEOX_*` environment variables. Output is a pure function of the
//! arguments and input files.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage, 3 parse
//! failure in an input file, 4 validation failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    kfold_split, load_annotations, manifest_csv, undersample_balance, write_corpus, AnnotationFormat, DatasetError,
};
use crate::detections::{MockDetector, NoiseModel, SUPPORTED_RESOLUTIONS};
use crate::evaluation::{evaluate_corpus, EvalError};
use crate::geometry::ImageDims;
use crate::interchange::{parse_detection_lines, record_mock, to_detection_lines, InterchangeError, RecordedDetections};
use crate::orientation::rank_rotations;
use crate::service::{serve, ServiceConfig};
use crate::synthgen::{generate_corpus, CorpusConfig, GroundTruthScene, GroupTag, OrientationMode};
use crate::vitals::{read_vitals_with, ReadOptions, ReadOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pulseox", version, about = "Read SpO2 and pulse rate from pulse-oximeter glyph detections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Lines,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Line-delimited JSON records.
    Native,
    /// `@` image headers followed by `class cx cy w h` lines.
    Normalized,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Probability that a glyph goes undetected.
    #[arg(long, env = "PULSEOX_NOISE_DROPOUT", default_value_t = 0.1)]
    pub noise_dropout: f64,
    /// Box-centre jitter as a fraction of glyph height.
    #[arg(long, env = "PULSEOX_NOISE_JITTER", default_value_t = 0.05)]
    pub noise_jitter: f64,
    /// 6/9 confusion probability on upside-down images.
    #[arg(long, env = "PULSEOX_NOISE_CONFUSION", default_value_t = 0.0)]
    pub noise_confusion: f64,
    /// Confidence spread within each band, 0 to 1.
    #[arg(long, env = "PULSEOX_NOISE_SPREAD", default_value_t = 1.0)]
    pub noise_spread: f64,
    /// Ignore the other noise flags and detect perfectly.
    #[arg(long, env = "PULSEOX_NOISELESS")]
    pub noiseless: bool,
}

impl NoiseArgs {
    pub fn model(&self) -> NoiseModel {
        if self.noiseless {
            return NoiseModel::zero();
        }
        NoiseModel {
            dropout: self.noise_dropout,
            jitter: self.noise_jitter,
            confusion: self.noise_confusion,
            confidence_spread: self.noise_spread,
            ..NoiseModel::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Annotation or corpus file.
    #[arg(long, env = "PULSEOX_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "PULSEOX_CORPUS_FORMAT", value_enum, default_value_t = InputFormat::Native)]
    pub corpus_format: InputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct DetectionSource {
    /// Recorded detections to read instead of running the mock detector.
    #[arg(long, env = "PULSEOX_DETECTIONS")]
    pub detections: Option<PathBuf>,
    /// Mock detector seed; required unless --detections is given.
    #[arg(long, env = "PULSEOX_SEED")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

fn parse_resolution(s: &str) -> Result<u32, String> {
    let v: u32 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if SUPPORTED_RESOLUTIONS.contains(&v) {
        Ok(v)
    } else {
        Err(format!("resolution must be one of {SUPPORTED_RESOLUTIONS:?}"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a balanced synthetic corpus and its manifest.
    Generate {
        #[arg(long, env = "PULSEOX_PER_GROUP", default_value_t = 125)]
        per_group: usize,
        #[arg(long, env = "PULSEOX_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "PULSEOX_RESOLUTION", value_parser = parse_resolution, default_value = "640")]
        resolution: u32,
        #[arg(long, env = "PULSEOX_ORIENTATION", default_value = "random")]
        orientation: OrientationMode,
        /// Probability of a third number below the vitals.
        #[arg(long, env = "PULSEOX_EXTRA_GROUP_RATE", default_value_t = 0.0)]
        extra_group_rate: f64,
        /// Output directory; receives corpus.jsonl and manifest.csv.
        #[arg(long, env = "PULSEOX_OUT")]
        out: PathBuf,
    },
    /// Run the mock detector at all four rotations and write interchange lines.
    Detect {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, env = "PULSEOX_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Output file; standard output when absent.
        #[arg(long, env = "PULSEOX_OUT")]
        out: Option<PathBuf>,
    },
    /// Read SpO2 and PR for every image.
    Read {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        source: DetectionSource,
        /// Read only the image as captured.
        #[arg(long, env = "PULSEOX_NO_ORIENT")]
        no_orient: bool,
        #[arg(long, env = "PULSEOX_FORMAT", value_enum, default_value_t = OutputFormat::Lines)]
        format: OutputFormat,
    },
    /// Rank the four rotations of every image by median digit confidence.
    Rank {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        source: DetectionSource,
        #[arg(long, env = "PULSEOX_FORMAT", value_enum, default_value_t = OutputFormat::Lines)]
        format: OutputFormat,
    },
    /// Detection mAP and the three accuracies, mean ± SD over folds.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        source: DetectionSource,
        #[arg(long, env = "PULSEOX_FOLDS", default_value_t = 5)]
        folds: usize,
        /// Seed of the fold split; defaults to --seed, then 0.
        #[arg(long, env = "PULSEOX_SPLIT_SEED")]
        split_seed: Option<u64>,
        #[arg(long, env = "PULSEOX_IOU_THRESHOLD", default_value_t = 0.5)]
        iou_threshold: f64,
        #[arg(long, env = "PULSEOX_RESOLUTION", value_parser = parse_resolution, default_value = "640")]
        resolution: u32,
        #[arg(long, env = "PULSEOX_FORMAT", value_enum, default_value_t = OutputFormat::Lines)]
        format: OutputFormat,
    },
    /// Balance groups by undersampling and assign stratified folds.
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, env = "PULSEOX_FOLDS", default_value_t = 5)]
        folds: usize,
        /// Undersample every group to this size first.
        #[arg(long, env = "PULSEOX_PER_GROUP")]
        per_group: Option<usize>,
        #[arg(long, env = "PULSEOX_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "PULSEOX_FORMAT", value_enum, default_value_t = OutputFormat::Lines)]
        format: OutputFormat,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "PULSEOX_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// External model weights; health is degraded when missing.
        #[arg(long, env = "PULSEOX_MODEL")]
        model: Option<PathBuf>,
        /// Corpus whose scenes can be read by id.
        #[arg(long, env = "PULSEOX_CORPUS")]
        corpus: Option<PathBuf>,
        #[arg(long, env = "PULSEOX_CORPUS_FORMAT", value_enum, default_value_t = InputFormat::Native)]
        corpus_format: InputFormat,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Failure(e.to_string()),
            DatasetError::Parse { .. } => CliError::Parse(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InterchangeError> for CliError {
    fn from(e: InterchangeError) -> Self {
        match e {
            InterchangeError::Parse { .. } => CliError::Parse(e.to_string()),
            InterchangeError::Invalid { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Backend { .. } => CliError::Failure(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Failure(format!("{}: {e}", path.display()))
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage(format!("--seed is required to {what}")))
}

fn json_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("output serialises"));
    out.push('\n');
}

fn load_corpus(args: &CorpusArgs) -> Result<Vec<GroundTruthScene>, CliError> {
    let format = match args.corpus_format {
        InputFormat::Native => AnnotationFormat::NativeLines,
        InputFormat::Normalized => AnnotationFormat::NormalizedBoxText,
    };
    Ok(load_annotations(&args.corpus, format)?.into_iter().map(|a| a.scene).collect())
}

fn mock(noise: &NoiseArgs, seed: u64) -> Result<MockDetector, CliError> {
    MockDetector::new(noise.model(), seed).map_err(|e| CliError::Validation(e.to_string()))
}

/// Recorded detections for the corpus; ids absent from the corpus are an error.
fn recorded(path: &Path, scenes: &[GroundTruthScene]) -> Result<RecordedDetections, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_failure(path))?;
    let records = parse_detection_lines(&text)?;
    let mut backend = RecordedDetections::for_scenes(scenes);
    let orphans = backend.insert_records(&records)?;
    if !orphans.is_empty() {
        return Err(CliError::Validation(format!(
            "detections for images not in the corpus: {}",
            orphans.join(", ")
        )));
    }
    Ok(backend)
}

/// Either a mock detector over scenes or recorded detections keyed by id.
enum Source {
    Mock(MockDetector),
    Recorded(RecordedDetections),
}

impl Source {
    fn open(args: &DetectionSource, scenes: &[GroundTruthScene], what: &str) -> Result<Self, CliError> {
        match &args.detections {
            Some(path) => Ok(Source::Recorded(recorded(path, scenes)?)),
            None => Ok(Source::Mock(mock(&args.noise, need_seed(args.seed, what)?)?)),
        }
    }
}

#[derive(Serialize)]
struct ReadLine<'a> {
    image_id: &'a str,
    #[serde(flatten)]
    outcome: &'a ReadOutcome,
}

#[derive(Serialize)]
struct ReadSummary {
    images: usize,
    readings: usize,
    failures: usize,
    failure_reasons: BTreeMap<String, usize>,
}

/// One line per image (as in `pulseox read`), for reuse by tests and the
/// service parity check.
pub fn read_line(image_id: &str, outcome: &ReadOutcome) -> String {
    serde_json::to_string(&ReadLine { image_id, outcome }).expect("output serialises")
}

fn cmd_read(
    corpus: &CorpusArgs,
    source: &DetectionSource,
    no_orient: bool,
    format: OutputFormat,
) -> Result<String, CliError> {
    let scenes = load_corpus(corpus)?;
    let options = ReadOptions { auto_orient: !no_orient };
    let backend = Source::open(source, &scenes, "run the mock detector")?;
    let outcomes: Vec<ReadOutcome> = scenes
        .iter()
        .map(|s| {
            match &backend {
                Source::Mock(m) => read_vitals_with(m, s, options),
                Source::Recorded(r) => read_vitals_with(r, s.id.as_str(), options),
            }
            .into()
        })
        .collect();

    let mut summary = ReadSummary {
        images: scenes.len(),
        readings: 0,
        failures: 0,
        failure_reasons: BTreeMap::new(),
    };
    for o in &outcomes {
        match o {
            ReadOutcome::Ok { .. } => summary.readings += 1,
            ReadOutcome::Failed { failure } => {
                summary.failures += 1;
                *summary.failure_reasons.entry(failure.reason.to_string()).or_default() += 1;
            }
        }
    }

    let mut out = String::new();
    match format {
        OutputFormat::Lines => {
            for (s, o) in scenes.iter().zip(&outcomes) {
                out.push_str(&read_line(&s.id, o));
                out.push('\n');
            }
            json_line(&mut out, &serde_json::json!({ "summary": summary }));
        }
        OutputFormat::Table => {
            let _ = writeln!(out, "{:<24} {:>5} {:>5} {:>8}  note", "image", "SpO2", "PR", "rotation");
            for (s, o) in scenes.iter().zip(&outcomes) {
                match o {
                    ReadOutcome::Ok { reading } => {
                        let note = if reading.pruned { "pruned" } else { "" };
                        let _ = writeln!(
                            out,
                            "{:<24} {:>5} {:>5} {:>8}  {note}",
                            s.id, reading.spo2, reading.pr, reading.rotation_used
                        );
                    }
                    ReadOutcome::Failed { failure } => {
                        let _ = writeln!(out, "{:<24} {:>5} {:>5} {:>8}  {}", s.id, "-", "-", "-", failure.reason);
                    }
                }
            }
            let _ = writeln!(
                out,
                "\n{} images, {} readings, {} failures",
                summary.images, summary.readings, summary.failures
            );
            for (reason, n) in &summary.failure_reasons {
                let _ = writeln!(out, "  {reason}: {n}");
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct RankEntry {
    rotation: crate::geometry::Rotation,
    median_conf: f64,
    digits: usize,
}

fn cmd_rank(corpus: &CorpusArgs, source: &DetectionSource, format: OutputFormat) -> Result<String, CliError> {
    let scenes = load_corpus(corpus)?;
    let backend = Source::open(source, &scenes, "run the mock detector")?;
    let mut out = String::new();
    let mut correct = 0usize;
    for s in &scenes {
        let ranked = match &backend {
            Source::Mock(m) => rank_rotations(m, s),
            Source::Recorded(r) => rank_rotations(r, s.id.as_str()),
        }
        .map_err(|e| CliError::Failure(format!("image {}: {e}", s.id)))?;
        correct += usize::from(ranked[0].rotation == s.true_orientation);
        let entries: Vec<RankEntry> = ranked
            .iter()
            .map(|c| RankEntry { rotation: c.rotation, median_conf: c.median_conf, digits: c.detections.len() })
            .collect();
        match format {
            OutputFormat::Lines => json_line(
                &mut out,
                &serde_json::json!({ "image_id": s.id, "true_orientation": s.true_orientation, "ranking": entries }),
            ),
            OutputFormat::Table => {
                let cells: Vec<String> = entries.iter().map(|e| format!("{:>3}:{:.3}", e.rotation, e.median_conf)).collect();
                let _ = writeln!(out, "{:<24} true {:>3}  {}", s.id, s.true_orientation, cells.join("  "));
            }
        }
    }
    match format {
        OutputFormat::Lines => json_line(
            &mut out,
            &serde_json::json!({ "summary": { "images": scenes.len(), "top1_correct": correct } }),
        ),
        OutputFormat::Table => {
            let _ = writeln!(out, "\ntop-1 orientation correct: {correct}/{}", scenes.len());
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    corpus: &CorpusArgs,
    source: &DetectionSource,
    folds: usize,
    split_seed: Option<u64>,
    iou_threshold: f64,
    resolution: u32,
    format: OutputFormat,
) -> Result<String, CliError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(CliError::Usage(format!("--iou-threshold {iou_threshold} must lie strictly between 0 and 1")));
    }
    let scenes = load_corpus(corpus)?;
    let backend = Source::open(source, &scenes, "run the mock detector")?;
    let plan = kfold_split(&scenes, folds, split_seed.or(source.seed).unwrap_or(0))?;
    let (report, _) = match &backend {
        Source::Mock(m) => evaluate_corpus(m, |s| s, &scenes, &plan, iou_threshold, resolution)?,
        Source::Recorded(r) => evaluate_corpus(r, |s| s.id.as_str(), &scenes, &plan, iou_threshold, resolution)?,
    };
    let mut out = String::new();
    match format {
        OutputFormat::Lines => json_line(&mut out, &report),
        OutputFormat::Table => out.push_str(&report.render_table()),
    }
    Ok(out)
}

fn cmd_split(
    corpus: &CorpusArgs,
    folds: usize,
    per_group: Option<usize>,
    seed: Option<u64>,
    format: OutputFormat,
) -> Result<String, CliError> {
    let seed = need_seed(seed, "split a corpus")?;
    let mut scenes = load_corpus(corpus)?;
    if let Some(n) = per_group {
        scenes = undersample_balance(&scenes, n, seed)?;
    }
    let plan = kfold_split(&scenes, folds, seed)?;
    let mut out = String::new();
    match format {
        OutputFormat::Lines => out.push_str(&plan.to_lines()),
        OutputFormat::Table => {
            let counts = plan.counts();
            let _ = write!(out, "{:<6}", "fold");
            for g in GroupTag::ALL {
                let _ = write!(out, " {:>6}", g.as_str());
            }
            let _ = writeln!(out, " {:>6}", "total");
            for f in 0..folds {
                let _ = write!(out, "{f:<6}");
                for g in GroupTag::ALL {
                    let _ = write!(out, " {:>6}", counts.get(&(f, g)).copied().unwrap_or(0));
                }
                let _ = writeln!(out, " {:>6}", plan.validation_ids(f).len());
            }
        }
    }
    Ok(out)
}

fn cmd_generate(
    per_group: usize,
    seed: Option<u64>,
    resolution: u32,
    orientation: OrientationMode,
    extra_group_rate: f64,
    out_dir: &Path,
) -> Result<String, CliError> {
    let seed = need_seed(seed, "generate a corpus")?;
    if !(0.0..=1.0).contains(&extra_group_rate) {
        return Err(CliError::Usage(format!("--extra-group-rate {extra_group_rate} must lie in [0, 1]")));
    }
    let config = CorpusConfig {
        per_group,
        dims: ImageDims::square(resolution),
        orientation,
        extra_group_rate,
        seed,
    };
    let scenes = generate_corpus(&config).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::create_dir_all(out_dir).map_err(io_failure(out_dir))?;
    let bytes = write_corpus(&out_dir.join("corpus.jsonl"), &scenes)?;
    let manifest = out_dir.join("manifest.csv");
    std::fs::write(&manifest, manifest_csv(&scenes)).map_err(io_failure(&manifest))?;
    let mut groups: BTreeMap<&str, usize> = GroupTag::ALL.iter().map(|g| (g.as_str(), 0)).collect();
    for s in &scenes {
        *groups.entry(s.group().as_str()).or_default() += 1;
    }
    let mut out = String::new();
    json_line(
        &mut out,
        &serde_json::json!({ "images": scenes.len(), "corpus_bytes": bytes, "groups": groups }),
    );
    Ok(out)
}

fn cmd_detect(corpus: &CorpusArgs, seed: Option<u64>, noise: &NoiseArgs, out: Option<&Path>) -> Result<String, CliError> {
    let seed = need_seed(seed, "run the mock detector")?;
    let scenes = load_corpus(corpus)?;
    let backend = mock(noise, seed)?;
    let text = to_detection_lines(&record_mock(&backend, &scenes));
    match out {
        Some(path) => {
            std::fs::write(path, &text).map_err(io_failure(path))?;
            let mut summary = String::new();
            json_line(
                &mut summary,
                &serde_json::json!({ "images": scenes.len(), "detections": text.lines().count() }),
            );
            Ok(summary)
        }
        None => Ok(text),
    }
}

fn cmd_serve(
    addr: SocketAddr,
    model: Option<PathBuf>,
    corpus: Option<PathBuf>,
    corpus_format: InputFormat,
    err: &mut dyn Write,
) -> Result<String, CliError> {
    let mut config = ServiceConfig { model_path: model, ..Default::default() };
    if let Some(path) = corpus {
        config = config.with_corpus(load_corpus(&CorpusArgs { corpus: path, corpus_format })?);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let _ = writeln!(err, "listening on http://{addr}");
    runtime
        .block_on(serve(addr, config))
        .map_err(|e| CliError::Failure(format!("{addr}: {e}")))?;
    Ok(String::new())
}

pub fn execute(cli: Cli, err: &mut dyn Write) -> Result<String, CliError> {
    match cli.command {
        Command::Generate { per_group, seed, resolution, orientation, extra_group_rate, out } => {
            cmd_generate(per_group, seed, resolution, orientation, extra_group_rate, &out)
        }
        Command::Detect { corpus, seed, noise, out } => cmd_detect(&corpus, seed, &noise, out.as_deref()),
        Command::Read { corpus, source, no_orient, format } => cmd_read(&corpus, &source, no_orient, format),
        Command::Rank { corpus, source, format } => cmd_rank(&corpus, &source, format),
        Command::Eval { corpus, source, folds, split_seed, iou_threshold, resolution, format } => {
            cmd_eval(&corpus, &source, folds, split_seed, iou_threshold, resolution, format)
        }
        Command::Split { corpus, folds, per_group, seed, format } => cmd_split(&corpus, folds, per_group, seed, format),
        Command::Serve { addr, model, corpus, corpus_format } => cmd_serve(addr, model, corpus, corpus_format, err),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(rendered.as_bytes()) } else { out.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(cli, err) {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_FAILURE
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
