//! The four downscale/crop strategies, per-image classification and
//! majority-vote aggregation.
//!
//! Work is keyed by `(image_id, patch_index)`: images may be processed in
//! any order on any number of workers, and results are always emitted
//! sorted by image id with patches in enumeration order.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentSpec;
use crate::classifier::{self, ClassifierError, PatchClassifier, ToyClassifier, TrainConfig, TrainOutcome};
use crate::dataset::ManifestEntry;
use crate::imaging::{self, ImagingError, RasterImage, Rect, TissueMask, DEFAULT_BG_THRESHOLD};
use crate::tiling::{self, TilingError, DEFAULT_COVERAGE_THRESHOLD};
use crate::Label;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("image {0} has no tissue patches above the coverage threshold; label is indeterminate")]
    Indeterminate(String),
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    MaskMismatch { img_w: u32, img_h: u32, mask_w: u32, mask_h: u32 },
    #[error("model consumes {model}px inputs but strategy {strategy} produces {expected}px inputs")]
    ModelMismatch { model: u32, expected: u32, strategy: String },
    #[error("cannot load image {image_id}: {message}")]
    Load { image_id: String, message: String },
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// How the classifier input is obtained from a whole image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyKind {
    /// Resample the whole image to `target` x `target`.
    FullDownscale { target: u32 },
    /// Tile into `patch`-sized windows and resample each to
    /// `classifier_input` (no resampling when they are equal).
    PatchCrop { patch: u32, classifier_input: u32 },
}

impl StrategyKind {
    pub const FULL_1000: Self = StrategyKind::FullDownscale { target: 1000 };
    pub const FULL_224: Self = StrategyKind::FullDownscale { target: 224 };
    pub const PATCH_448: Self = StrategyKind::PatchCrop { patch: 448, classifier_input: 224 };
    pub const PATCH_224: Self = StrategyKind::PatchCrop { patch: 224, classifier_input: 224 };

    /// The four strategies compared in the whole-image experiments.
    pub const ALL: [Self; 4] = [Self::FULL_1000, Self::FULL_224, Self::PATCH_448, Self::PATCH_224];

    pub fn classifier_input(&self) -> u32 {
        match *self {
            StrategyKind::FullDownscale { target } => target,
            StrategyKind::PatchCrop { classifier_input, .. } => classifier_input,
        }
    }

    pub fn is_patch(&self) -> bool {
        matches!(self, StrategyKind::PatchCrop { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StrategyKind::FullDownscale { target: 0 } => {
                Err(PipelineError::Strategy("downscale target must be positive".into()))
            }
            StrategyKind::PatchCrop { patch, classifier_input } if patch < 2 || patch % 2 != 0 || classifier_input == 0 => {
                Err(PipelineError::Strategy(format!(
                    "patch size must be even and >= 2 and classifier input positive, got {patch}/{classifier_input}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StrategyKind::FullDownscale { target } => write!(f, "full-{target}"),
            StrategyKind::PatchCrop { patch, classifier_input: 224 } => write!(f, "patch-{patch}"),
            StrategyKind::PatchCrop { patch, classifier_input } => write!(f, "patch-{patch}-{classifier_input}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = PipelineError;

    /// Accepts `full-<target>`, `patch-<size>` (224px classifier input) and
    /// `patch-<size>-<input>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PipelineError::Strategy(format!("unrecognised strategy `{s}`"));
        let parts: Vec<&str> = s.trim().split('-').collect();
        let num = |p: &str| p.parse::<u32>().map_err(|_| bad());
        let kind = match parts.as_slice() {
            ["full", t] => StrategyKind::FullDownscale { target: num(t)? },
            ["patch", p] => StrategyKind::PatchCrop { patch: num(p)?, classifier_input: 224 },
            ["patch", p, c] => StrategyKind::PatchCrop { patch: num(p)?, classifier_input: num(c)? },
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for StrategyKind {
    type Error = PipelineError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyKind> for String {
    fn from(k: StrategyKind) -> String {
        k.to_string()
    }
}

/// How patch probabilities become an image label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Hard patch labels (p >= 0.5), active iff the active fraction
    /// reaches `vote_threshold`.
    #[default]
    MajorityVote,
    /// Active iff the mean probability reaches `vote_threshold`. Ablation only.
    MeanProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub vote_threshold: f64,
    pub coverage_threshold: f64,
    pub aggregation: Aggregation,
    pub bg_threshold: u8,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self::new(StrategyKind::PATCH_224)
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            vote_threshold: 0.5,
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            aggregation: Aggregation::MajorityVote,
            bg_threshold: DEFAULT_BG_THRESHOLD,
        }
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        for (name, v) in [("vote_threshold", self.vote_threshold), ("coverage_threshold", self.coverage_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::Strategy(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Label for a set of patch probabilities; `None` when there are none.
    pub fn aggregate(&self, probs: &[f64]) -> Option<Label> {
        if probs.is_empty() {
            return None;
        }
        let n = probs.len() as f64;
        let positive = match self.aggregation {
            Aggregation::MajorityVote => {
                let active = probs.iter().filter(|&&p| p >= 0.5).count() as f64;
                active / n >= self.vote_threshold
            }
            Aggregation::MeanProbability => probs.iter().sum::<f64>() / n >= self.vote_threshold,
        };
        Some(Label::from_positive(positive))
    }
}

/// One classifier-ready input with its provenance in the parent image.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    /// Window ordinal in the full enumeration; 0 for whole-image inputs.
    pub patch_index: u32,
    pub rect: Rect,
    pub coverage: f64,
    pub image: RasterImage,
}

/// A window (or the whole image) selected for classification, before
/// pixels are cropped and resampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputWindow {
    pub patch_index: u32,
    pub rect: Rect,
    pub coverage: f64,
}

fn check_mask(img: &RasterImage, mask: &TissueMask) -> Result<()> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(PipelineError::MaskMismatch {
            img_w: img.width(),
            img_h: img.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    Ok(())
}

/// Windows the strategy will classify. PatchCrop windows are tiled and
/// coverage-filtered; FullDownscale yields the whole image.
pub fn select_windows(mask: &TissueMask, strategy: &StrategyConfig) -> Result<Vec<InputWindow>> {
    strategy.validate()?;
    let full = Rect::new(0, 0, mask.width(), mask.height());
    match strategy.kind {
        StrategyKind::FullDownscale { .. } => Ok(vec![InputWindow {
            patch_index: 0,
            rect: full,
            coverage: mask.coverage_index().coverage(&full)?,
        }]),
        StrategyKind::PatchCrop { patch, .. } => {
            let rects = tiling::tile(mask.width(), mask.height(), patch)?;
            let kept = tiling::filter_patches(&rects, mask, strategy.coverage_threshold, "", None)?;
            Ok(kept
                .into_iter()
                .map(|p| InputWindow {
                    patch_index: p.patch_index,
                    rect: p.rect,
                    coverage: p.coverage,
                })
                .collect())
        }
    }
}

/// Crop a window and bring it to the classifier input size. Square windows
/// already at the input size are passed through untouched.
pub fn render_window(img: &RasterImage, window: &InputWindow, strategy: &StrategyConfig) -> Result<RasterImage> {
    let side = strategy.kind.classifier_input();
    let region = if window.rect == img.full_rect() {
        img.clone()
    } else {
        imaging::crop(img, &window.rect)?
    };
    if region.width() == side && region.height() == side {
        Ok(region)
    } else {
        Ok(imaging::downscale_bicubic(&region, side, side)?)
    }
}

/// All classifier inputs for one image under a strategy.
pub fn prepare_inputs(img: &RasterImage, mask: &TissueMask, strategy: &StrategyConfig) -> Result<Vec<PreparedInput>> {
    check_mask(img, mask)?;
    select_windows(mask, strategy)?
        .into_iter()
        .map(|w| {
            Ok(PreparedInput {
                patch_index: w.patch_index,
                rect: w.rect,
                coverage: w.coverage,
                image: render_window(img, &w, strategy)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchProb {
    pub patch_index: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePrediction {
    pub image_id: String,
    pub strategy: String,
    pub patch_probs: Vec<PatchProb>,
    pub votes_active: usize,
    pub votes_total: usize,
    pub label: Label,
}

impl ImagePrediction {
    pub fn active_fraction(&self) -> f64 {
        self.votes_active as f64 / self.votes_total as f64
    }
}

/// Build a prediction from per-patch probabilities.
pub fn aggregate_prediction(image_id: &str, strategy: &StrategyConfig, patch_probs: Vec<PatchProb>) -> Result<ImagePrediction> {
    let probs: Vec<f64> = patch_probs.iter().map(|p| p.probability).collect();
    let label = strategy
        .aggregate(&probs)
        .ok_or_else(|| PipelineError::Indeterminate(image_id.to_string()))?;
    Ok(ImagePrediction {
        image_id: image_id.to_string(),
        strategy: strategy.name(),
        votes_active: probs.iter().filter(|&&p| p >= 0.5).count(),
        votes_total: probs.len(),
        patch_probs,
        label,
    })
}

fn check_model(model: &dyn PatchClassifier, strategy: &StrategyConfig) -> Result<()> {
    let expected = strategy.kind.classifier_input();
    if model.input_size() != expected {
        return Err(PipelineError::ModelMismatch {
            model: model.input_size(),
            expected,
            strategy: strategy.name(),
        });
    }
    Ok(())
}

/// Score every prepared input and aggregate into a whole-image label.
/// An image with no qualifying patches is [`PipelineError::Indeterminate`].
pub fn classify_whole_image(
    model: &dyn PatchClassifier,
    image_id: &str,
    img: &RasterImage,
    mask: &TissueMask,
    strategy: &StrategyConfig,
) -> Result<ImagePrediction> {
    check_model(model, strategy)?;
    check_mask(img, mask)?;
    let mut probs = Vec::new();
    for window in select_windows(mask, strategy)? {
        let input = render_window(img, &window, strategy)?;
        probs.push(PatchProb {
            patch_index: window.patch_index,
            probability: model.predict_proba(&input)?,
        });
    }
    aggregate_prediction(image_id, strategy, probs)
}

/// Per-image result of an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageOutcome {
    Predicted(ImagePrediction),
    Indeterminate { image_id: String },
    Failed { image_id: String, message: String },
}

impl ImageOutcome {
    pub fn image_id(&self) -> &str {
        match self {
            ImageOutcome::Predicted(p) => &p.image_id,
            ImageOutcome::Indeterminate { image_id } | ImageOutcome::Failed { image_id, .. } => image_id,
        }
    }

    pub fn prediction(&self) -> Option<&ImagePrediction> {
        match self {
            ImageOutcome::Predicted(p) => Some(p),
            _ => None,
        }
    }

    /// JSON-lines record; failed images have none.
    pub fn record(&self, strategy: &str) -> Option<PredictionRecord> {
        match self {
            ImageOutcome::Predicted(p) => Some(PredictionRecord {
                image_id: p.image_id.clone(),
                strategy: p.strategy.clone(),
                label: Verdict::from(p.label),
                votes_active: p.votes_active,
                votes_total: p.votes_total,
                patch_probs: p.patch_probs.clone(),
            }),
            ImageOutcome::Indeterminate { image_id } => Some(PredictionRecord {
                image_id: image_id.clone(),
                strategy: strategy.to_string(),
                label: Verdict::Indeterminate,
                votes_active: 0,
                votes_total: 0,
                patch_probs: Vec::new(),
            }),
            ImageOutcome::Failed { .. } => None,
        }
    }
}

/// Image-level outcome as written to prediction files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ActiveEoE,
    NonEoE,
    Indeterminate,
}

impl Verdict {
    pub fn label(self) -> Option<Label> {
        match self {
            Verdict::ActiveEoE => Some(Label::ActiveEoE),
            Verdict::NonEoE => Some(Label::NonEoE),
            Verdict::Indeterminate => None,
        }
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::ActiveEoE => Verdict::ActiveEoE,
            Label::NonEoE => Verdict::NonEoE,
        }
    }
}

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub strategy: String,
    pub label: Verdict,
    pub votes_active: usize,
    pub votes_total: usize,
    pub patch_probs: Vec<PatchProb>,
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| std::io::Error::other(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_predictions(text: &str) -> std::result::Result<Vec<PredictionRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Where experiment images come from.
pub trait ImageSource: Sync {
    fn load(&self, entry: &ManifestEntry) -> std::result::Result<RasterImage, String>;
}

/// Loads PNG/PPM files, resolving relative manifest paths against `root`.
#[derive(Debug, Clone)]
pub struct DiskSource {
    pub root: PathBuf,
}

impl DiskSource {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            root: root.as_ref().to_path_buf(),
        }
    }
}

impl ImageSource for DiskSource {
    fn load(&self, entry: &ManifestEntry) -> std::result::Result<RasterImage, String> {
        let path = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        };
        let img = RasterImage::load(&path).map_err(|e| e.to_string())?;
        if let Some((w, h)) = entry.resolution_class.dims() {
            if (img.width(), img.height()) != (w, h) {
                return Err(format!(
                    "{} is {}x{} but the manifest declares {}",
                    path.display(),
                    img.width(),
                    img.height(),
                    entry.resolution_class
                ));
            }
        }
        Ok(img)
    }
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

fn classify_entry(
    model: &dyn PatchClassifier,
    entry: &ManifestEntry,
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
) -> ImageOutcome {
    let image_id = entry.image_id.clone();
    let img = match source.load(entry) {
        Ok(img) => img,
        Err(message) => return ImageOutcome::Failed { image_id, message },
    };
    let mask = imaging::tissue_mask(&img, strategy.bg_threshold);
    match classify_whole_image(model, &image_id, &img, &mask, strategy) {
        Ok(p) => ImageOutcome::Predicted(p),
        Err(PipelineError::Indeterminate(_)) => ImageOutcome::Indeterminate { image_id },
        Err(e) => ImageOutcome::Failed {
            image_id,
            message: e.to_string(),
        },
    }
}

/// Classify every manifest entry on `workers` threads. The output is
/// sorted by image id and independent of the worker count; images that
/// fail to load become [`ImageOutcome::Failed`] entries.
pub fn run_experiment(
    model: &dyn PatchClassifier,
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
    workers: usize,
) -> Result<Vec<ImageOutcome>> {
    strategy.validate()?;
    check_model(model, strategy)?;
    let pool = worker_pool(workers)?;
    let mut outcomes: Vec<ImageOutcome> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| classify_entry(model, entry, source, strategy))
            .collect()
    });
    outcomes.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    Ok(outcomes)
}

/// Classifier-ready training inputs for a strategy, one per kept window of
/// every training image, each carrying its parent's label.
#[derive(Debug, Clone, Default)]
pub struct TrainingInputs {
    pub samples: Vec<(RasterImage, Label)>,
    /// `(image_id, patch_index)` per sample.
    pub origins: Vec<(String, u32)>,
    /// Training images that produced no windows or failed to load.
    pub skipped: Vec<(String, String)>,
}

/// Training features for a strategy, extracted without augmentation.
#[derive(Debug, Clone, Default)]
pub struct TrainingFeatures {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub origins: Vec<(String, u32)>,
    pub skipped: Vec<(String, String)>,
}

/// Skip reason for training images without any window above the
/// coverage threshold.
pub const NO_WINDOWS: &str = "no tissue windows";

/// A model trained for one strategy plus bookkeeping on its inputs.
#[derive(Debug, Clone)]
pub struct StrategyTraining {
    pub outcome: TrainOutcome,
    pub samples: usize,
    /// `(image_id, reason)` for training images that contributed nothing.
    pub skipped: Vec<(String, String)>,
}

type Harvest<T> = std::result::Result<Vec<(u32, T)>, String>;

fn harvest<T: Send>(
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
    pool: &rayon::ThreadPool,
    per_input: impl Fn(RasterImage) -> std::result::Result<T, String> + Sync,
) -> Vec<Harvest<T>> {
    pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let img = source.load(entry)?;
                let mask = imaging::tissue_mask(&img, strategy.bg_threshold);
                let windows = select_windows(&mask, strategy).map_err(|e| e.to_string())?;
                if windows.is_empty() {
                    return Err(NO_WINDOWS.to_string());
                }
                windows
                    .iter()
                    .map(|w| {
                        let input = render_window(&img, w, strategy).map_err(|e| e.to_string())?;
                        Ok((w.patch_index, per_input(input)?))
                    })
                    .collect()
            })
            .collect()
    })
}

/// Materialise every training input as an image (needed when augmenting).
pub fn collect_training_inputs(
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
    workers: usize,
) -> Result<TrainingInputs> {
    strategy.validate()?;
    let pool = worker_pool(workers)?;
    let mut out = TrainingInputs::default();
    for (entry, result) in entries.iter().zip(harvest(entries, source, strategy, &pool, Ok)) {
        match result {
            Ok(items) => {
                for (idx, img) in items {
                    out.samples.push((img, entry.label));
                    out.origins.push((entry.image_id.clone(), idx));
                }
            }
            Err(msg) => out.skipped.push((entry.image_id.clone(), msg)),
        }
    }
    Ok(out)
}

/// Extract features for every training input without keeping pixels.
pub fn collect_training_features(
    model: &ToyClassifier,
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
    workers: usize,
) -> Result<TrainingFeatures> {
    strategy.validate()?;
    check_model(model, strategy)?;
    let pool = worker_pool(workers)?;
    let results = harvest(entries, source, strategy, &pool, |img| {
        model.features(&img).map_err(|e| e.to_string())
    });
    let mut out = TrainingFeatures::default();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(items) => {
                for (idx, f) in items {
                    out.features.push(f);
                    out.labels.push(entry.label);
                    out.origins.push((entry.image_id.clone(), idx));
                }
            }
            Err(msg) => out.skipped.push((entry.image_id.clone(), msg)),
        }
    }
    Ok(out)
}

/// Replacement labels for a set of training labels.
pub type Relabel<'a> = dyn Fn(&[Label]) -> Vec<Label> + 'a;

/// Train a fresh toy model for a strategy from training images. Uses the
/// feature cache when `spec` is the identity, materialised inputs
/// otherwise. `relabel` optionally replaces the per-sample labels (used
/// by the random-label control).
pub fn train_for_strategy(
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    strategy: &StrategyConfig,
    cfg: &TrainConfig,
    spec: &AugmentSpec,
    workers: usize,
    relabel: Option<&Relabel<'_>>,
) -> Result<StrategyTraining> {
    let template = ToyClassifier::new(strategy.kind.classifier_input());
    let pool = worker_pool(workers)?;
    if spec.is_identity() {
        let set = collect_training_features(&template, entries, source, strategy, workers)?;
        let labels = relabel.map(|f| f(&set.labels)).unwrap_or(set.labels);
        let outcome = pool.install(|| classifier::train_features(&template, &set.features, &labels, cfg))?;
        Ok(StrategyTraining {
            outcome,
            samples: labels.len(),
            skipped: set.skipped,
        })
    } else {
        let set = collect_training_inputs(entries, source, strategy, workers)?;
        let mut samples = set.samples;
        if let Some(f) = relabel {
            let labels: Vec<Label> = samples.iter().map(|s| s.1).collect();
            for (s, l) in samples.iter_mut().zip(f(&labels)) {
                s.1 = l;
            }
        }
        let outcome = pool.install(|| classifier::train_source(&template, samples.as_slice(), cfg, spec))?;
        Ok(StrategyTraining {
            outcome,
            samples: samples.len(),
            skipped: set.skipped,
        })
    }
}
