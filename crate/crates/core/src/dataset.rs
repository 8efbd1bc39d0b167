//! Manifests, the class- and resolution-balanced split, and the synthetic
//! biopsy generator.
//!
//! Synthetic images are a smooth tissue blob on a near-white slide with a
//! stained texture and scattered nuclei. Positive images additionally carry
//! small dark elliptical marks laid out by one of four scatter patterns:
//! a compact local cluster, a band along the tissue edge, one half of the
//! tissue, or diffusely over the whole tissue together with a global
//! texture shift. Every planted mark is recorded in a ground-truth ledger.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{quantize, RasterImage};
use crate::pipeline::ImageSource;
use crate::seeds::{self, Stream};
use crate::Label;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split shortfall in cell ({label}, {resolution}): requested {requested}, available {available}")]
    Shortfall {
        label: Label,
        resolution: ResolutionClass,
        requested: usize,
        available: usize,
    },
    #[error("invalid split spec: {0}")]
    Spec(String),
    #[error("duplicate image id `{0}` in manifest")]
    DuplicateId(String),
    #[error("infeasible synthetic geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest row {row}: {message}")]
    Row { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Acquisition resolution of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ResolutionClass {
    /// 4140 x 3096
    R1,
    /// 2010 x 1548
    R2,
    /// 1360 x 1024
    R3,
    Other { width: u32, height: u32 },
}

impl ResolutionClass {
    pub fn from_dims(width: u32, height: u32) -> Self {
        match (width, height) {
            (4140, 3096) => ResolutionClass::R1,
            (2010, 1548) => ResolutionClass::R2,
            (1360, 1024) => ResolutionClass::R3,
            _ => ResolutionClass::Other { width, height },
        }
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        Some(match *self {
            ResolutionClass::R1 => (4140, 3096),
            ResolutionClass::R2 => (2010, 1548),
            ResolutionClass::R3 => (1360, 1024),
            ResolutionClass::Other { width, height } => (width, height),
        })
    }
}

impl fmt::Display for ResolutionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (w, h) = self.dims().expect("always known");
        write!(f, "{w}x{h}")
    }
}

impl FromStr for ResolutionClass {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "R1" => return Ok(ResolutionClass::R1),
            "R2" => return Ok(ResolutionClass::R2),
            "R3" => return Ok(ResolutionClass::R3),
            _ => {}
        }
        let (w, h) = parse_dims(s)?;
        Ok(ResolutionClass::from_dims(w, h))
    }
}

impl TryFrom<String> for ResolutionClass {
    type Error = DatasetError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ResolutionClass> for String {
    fn from(r: ResolutionClass) -> String {
        r.to_string()
    }
}

/// Parse `WxH`.
pub fn parse_dims(s: &str) -> Result<(u32, u32)> {
    let bad = || DatasetError::Argument(format!("expected WIDTHxHEIGHT, got `{s}`"));
    let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let w: u32 = w.parse().map_err(|_| bad())?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub resolution_class: ResolutionClass,
}

pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["image_id", "path", "label", "resolution_class"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DatasetError::Row {
            row: 0,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |k: usize| rec.get(k).unwrap_or("").to_string();
        let label = field(2).parse::<Label>().map_err(|message| DatasetError::Row { row, message })?;
        let resolution_class = field(3).parse::<ResolutionClass>().map_err(|e| DatasetError::Row {
            row,
            message: e.to_string(),
        })?;
        let image_id = field(0);
        if !seen.insert(image_id.clone()) {
            return Err(DatasetError::DuplicateId(image_id));
        }
        out.push(ManifestEntry {
            image_id,
            path: PathBuf::from(field(1)),
            label,
            resolution_class,
        });
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(writer: W, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["image_id", "path", "label", "resolution_class"])?;
    for e in entries {
        w.write_record([
            e.image_id.as_str(),
            &e.path.to_string_lossy(),
            &e.label.to_string(),
            &e.resolution_class.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Ground-truth map `image_id -> label`.
pub fn truth_map(entries: &[ManifestEntry]) -> BTreeMap<String, Label> {
    entries.iter().map(|e| (e.image_id.clone(), e.label)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub val_per_class: usize,
    /// Images per class drawn from each resolution; must sum to
    /// `train_per_class + val_per_class`. Empty pools all resolutions.
    pub per_resolution_counts: BTreeMap<ResolutionClass, usize>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_per_class: 147,
            val_per_class: 63,
            per_resolution_counts: [
                (ResolutionClass::R1, 29),
                (ResolutionClass::R2, 126),
                (ResolutionClass::R3, 55),
            ]
            .into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
}

/// Largest-remainder apportionment of `total` across `weights`; ties go
/// to the earlier weight.
pub fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rema: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, &w)| (total * w % sum, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - out.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Draw equal-sized train and validation sets per class, with equal
/// per-resolution counts in both classes. Validation places are spread
/// over resolutions by largest remainder; selection within each
/// (class, resolution) cell is uniform without replacement.
pub fn balanced_split(manifest: &[ManifestEntry], spec: &SplitSpec) -> Result<Split> {
    let per_class = spec.train_per_class + spec.val_per_class;
    let mut ids = BTreeSet::new();
    for e in manifest {
        if !ids.insert(e.image_id.as_str()) {
            return Err(DatasetError::DuplicateId(e.image_id.clone()));
        }
    }

    // None = all resolutions pooled.
    let cells: Vec<(Option<ResolutionClass>, usize)> = if spec.per_resolution_counts.is_empty() {
        vec![(None, per_class)]
    } else {
        let sum: usize = spec.per_resolution_counts.values().sum();
        if sum != per_class {
            return Err(DatasetError::Spec(format!(
                "per-resolution counts sum to {sum} but train + validation per class is {per_class}"
            )));
        }
        spec.per_resolution_counts.iter().map(|(r, &n)| (Some(*r), n)).collect()
    };
    let weights: Vec<usize> = cells.iter().map(|c| c.1).collect();
    let val_counts = apportion(spec.val_per_class, &weights);

    let mut rng = seeds::stream_rng(spec.seed, Stream::Split);
    let mut split = Split::default();
    for label in [Label::ActiveEoE, Label::NonEoE] {
        for ((res, count), &n_val) in cells.iter().zip(&val_counts) {
            let mut pool: Vec<&ManifestEntry> = manifest
                .iter()
                .filter(|e| e.label == label && res.is_none_or(|r| e.resolution_class == r))
                .collect();
            if pool.len() < *count {
                return Err(DatasetError::Shortfall {
                    label,
                    resolution: res.unwrap_or(ResolutionClass::Other { width: 0, height: 0 }),
                    requested: *count,
                    available: pool.len(),
                });
            }
            pool.sort_by(|a, b| a.image_id.cmp(&b.image_id));
            pool.shuffle(&mut rng);
            split.validation.extend(pool[..n_val].iter().map(|e| (*e).clone()));
            split.train.extend(pool[n_val..*count].iter().map(|e| (*e).clone()));
        }
    }
    split.train.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    split.validation.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(split)
}

/// Spatial layout of the planted features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// One compact cluster at a single place in the tissue.
    LocalCluster,
    /// A band along the tissue boundary.
    EdgeDistributed,
    /// Restricted to the left half of the tissue.
    HalfTissue,
    /// Spread over all tissue, plus a global texture shift.
    GlobalDiffuse,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::LocalCluster => "local",
            PatternKind::EdgeDistributed => "edge",
            PatternKind::HalfTissue => "half",
            PatternKind::GlobalDiffuse => "global",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" | "a" | "local_cluster" => Ok(PatternKind::LocalCluster),
            "edge" | "b" | "edge_distributed" => Ok(PatternKind::EdgeDistributed),
            "half" | "c" | "half_tissue" => Ok(PatternKind::HalfTissue),
            "global" | "d" | "global_diffuse" => Ok(PatternKind::GlobalDiffuse),
            other => Err(DatasetError::Argument(format!("unknown pattern `{other}`"))),
        }
    }
}

/// Stained-tissue appearance shared by both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseTexture {
    pub tissue_rgb: [u8; 3],
    /// Per-image colour offset drawn from `[-jitter, jitter]` per channel.
    pub image_jitter: f64,
    /// Per-pixel uniform noise amplitude.
    pub noise: f64,
    /// Amplitude of the smooth low-frequency modulation.
    pub modulation: f64,
    /// Fraction of tissue area covered by nuclei.
    pub nuclei_density: f64,
    pub nuclei_rgb: [u8; 3],
    pub background_rgb: [u8; 3],
    pub background_noise: f64,
}

impl Default for BaseTexture {
    fn default() -> Self {
        Self {
            tissue_rgb: [205, 135, 185],
            image_jitter: 4.0,
            noise: 14.0,
            modulation: 8.0,
            nuclei_density: 0.04,
            nuclei_rgb: [115, 65, 150],
            background_rgb: [250, 250, 250],
            background_noise: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPattern {
    pub kind: PatternKind,
    /// Fraction of the pattern's region covered by marks, in (0, 1].
    pub feature_density: f64,
    /// Nominal mark diameter in pixels.
    pub feature_size: u32,
    /// Diameter of the cluster region (local pattern only).
    pub cluster_diameter: u32,
    /// Depth of the boundary band (edge pattern only).
    pub edge_band: u32,
    /// Tissue colour shift of positives (global pattern only).
    pub texture_shift: [i16; 3],
    pub mark_rgb: [u8; 3],
    pub base: BaseTexture,
}

impl SynthPattern {
    pub fn preset(kind: PatternKind) -> Self {
        let density = match kind {
            PatternKind::LocalCluster => 0.35,
            PatternKind::EdgeDistributed => 0.12,
            PatternKind::HalfTissue | PatternKind::GlobalDiffuse => 0.03,
        };
        Self {
            kind,
            feature_density: density,
            feature_size: 10,
            cluster_diameter: 64,
            edge_band: 48,
            texture_shift: if kind == PatternKind::GlobalDiffuse { [-10, -14, -8] } else { [0, 0, 0] },
            mark_rgb: [95, 25, 70],
            base: BaseTexture::default(),
        }
    }

    fn validate(&self, dims: (u32, u32)) -> Result<()> {
        if self.feature_size == 0 {
            return Err(DatasetError::Geometry("feature size must be at least 1 px".into()));
        }
        if !(self.feature_density > 0.0 && self.feature_density <= 1.0) {
            return Err(DatasetError::Argument(format!(
                "feature density must lie in (0, 1], got {}",
                self.feature_density
            )));
        }
        let min_dim = f64::from(dims.0.min(dims.1));
        if min_dim < 32.0 {
            return Err(DatasetError::Geometry(format!("image {}x{} is too small", dims.0, dims.1)));
        }
        let inner = min_dim * BLOB_RADIUS * (1.0 - MAX_HARMONIC_TOTAL);
        let fs = f64::from(self.feature_size);
        if fs * 4.0 > inner {
            return Err(DatasetError::Geometry(format!(
                "feature size {} px does not fit a tissue blob of inner radius {inner:.0} px",
                self.feature_size
            )));
        }
        match self.kind {
            PatternKind::LocalCluster => {
                let r = f64::from(self.cluster_diameter) / 2.0;
                if self.cluster_diameter < self.feature_size || r + fs > inner {
                    return Err(DatasetError::Geometry(format!(
                        "cluster diameter {} px must be >= feature size and fit inside radius {inner:.0} px",
                        self.cluster_diameter
                    )));
                }
            }
            PatternKind::EdgeDistributed
                if (f64::from(self.edge_band) < fs || f64::from(self.edge_band) > inner) => {
                    return Err(DatasetError::Geometry(format!(
                        "edge band {} px must lie between the feature size and {inner:.0} px",
                        self.edge_band
                    )));
                }
            _ => {}
        }
        Ok(())
    }
}

/// How labels are assigned to generated images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Even indices positive, odd negative.
    #[default]
    Alternate,
    AllPositive,
    AllNegative,
}

impl LabelRule {
    pub fn label(self, index: usize) -> Label {
        match self {
            LabelRule::Alternate => Label::from_positive(index.is_multiple_of(2)),
            LabelRule::AllPositive => Label::ActiveEoE,
            LabelRule::AllNegative => Label::NonEoE,
        }
    }
}

impl FromStr for LabelRule {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "alternate" => Ok(LabelRule::Alternate),
            "positive" | "all-positive" => Ok(LabelRule::AllPositive),
            "negative" | "all-negative" => Ok(LabelRule::AllNegative),
            other => Err(DatasetError::Argument(format!("unknown label rule `{other}`"))),
        }
    }
}

const BLOB_RADIUS: f64 = 0.42;
const MAX_HARMONIC_TOTAL: f64 = 0.14;
const HARMONICS: [u32; 4] = [2, 3, 4, 5];
const ANGLE_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub x: f64,
    pub y: f64,
    pub rx: f64,
    pub ry: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cx: f64,
    pub cy: f64,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    /// `(harmonic, amplitude, phase)`; boundary radius is
    /// `radius * (1 + sum amplitude * cos(harmonic * theta + phase))`.
    pub harmonics: Vec<(u32, f64, f64)>,
}

impl Blob {
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        self.radius
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|&(k, a, p)| a * (f64::from(k) * theta + p).cos())
                    .sum::<f64>())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        (dx * dx + dy * dy).sqrt() < self.boundary_radius(dy.atan2(dx))
    }
}

/// Everything the generator planted in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub label: Label,
    pub pattern: PatternKind,
    pub width: u32,
    pub height: u32,
    pub blob: Blob,
    pub tissue_pixels: u64,
    pub marks: Vec<Mark>,
    pub cluster: Option<Cluster>,
    /// Inclusive band the mark count was drawn from (0, 0 for negatives).
    pub expected_marks: (usize, usize),
}

impl GroundTruth {
    /// True if any planted mark's bounding box overlaps `rect`.
    pub fn marks_in(&self, rect: &crate::imaging::Rect) -> usize {
        let (x0, y0) = (f64::from(rect.x), f64::from(rect.y));
        let (x1, y1) = (x0 + f64::from(rect.w), y0 + f64::from(rect.h));
        self.marks
            .iter()
            .filter(|m| m.x + m.rx >= x0 && m.x - m.rx < x1 && m.y + m.ry >= y0 && m.y - m.ry < y1)
            .count()
    }
}

/// One generated image with its truth record.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub entry: ManifestEntry,
    pub image: RasterImage,
    pub truth: GroundTruth,
}

/// Deterministic per-index renderer: image `i` depends only on
/// `(pattern, dims, seed, i)`.
#[derive(Debug, Clone)]
pub struct SynthGenerator {
    pub pattern: SynthPattern,
    pub rule: LabelRule,
    pub dims: (u32, u32),
    pub seed: u64,
    pub id_prefix: String,
}

impl SynthGenerator {
    pub fn new(pattern: SynthPattern, rule: LabelRule, dims: (u32, u32), seed: u64) -> Result<Self> {
        pattern.validate(dims)?;
        let id_prefix = pattern.kind.name().to_string();
        Ok(Self {
            pattern,
            rule,
            dims,
            seed,
            id_prefix,
        })
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.id_prefix = prefix.into();
        self
    }

    pub fn image_id(&self, index: usize) -> String {
        format!("{}-{index:05}", self.id_prefix)
    }

    pub fn entry(&self, index: usize) -> ManifestEntry {
        let image_id = self.image_id(index);
        ManifestEntry {
            path: PathBuf::from(format!("{image_id}.png")),
            image_id,
            label: self.rule.label(index),
            resolution_class: ResolutionClass::from_dims(self.dims.0, self.dims.1),
        }
    }

    pub fn manifest(&self, n: usize) -> Vec<ManifestEntry> {
        (0..n).map(|i| self.entry(i)).collect()
    }

    pub fn render(&self, index: usize) -> SynthImage {
        let entry = self.entry(index);
        let seed = seeds::derive_indexed(seeds::stream_seed(self.seed, Stream::Synth), &self.id_prefix, index as u64);
        let mut rng = seeds::rng(seed);
        let (image, truth) = render_image(&self.pattern, self.dims, entry.label, &entry.image_id, &mut rng);
        SynthImage { entry, image, truth }
    }

    /// An [`ImageSource`] that re-renders images on demand.
    pub fn source(&self, n: usize) -> SynthSource<'_> {
        SynthSource {
            generator: self,
            index: (0..n).map(|i| (self.image_id(i), i)).collect(),
        }
    }
}

pub struct SynthSource<'a> {
    generator: &'a SynthGenerator,
    index: HashMap<String, usize>,
}

impl ImageSource for SynthSource<'_> {
    fn load(&self, entry: &ManifestEntry) -> std::result::Result<RasterImage, String> {
        let i = self
            .index
            .get(&entry.image_id)
            .ok_or_else(|| format!("unknown synthetic image `{}`", entry.image_id))?;
        Ok(self.generator.render(*i).image)
    }
}

/// A fully materialised synthetic set.
#[derive(Debug, Clone, Default)]
pub struct SynthSet {
    pub samples: Vec<(RasterImage, Label)>,
    pub manifest: Vec<ManifestEntry>,
    pub truths: Vec<GroundTruth>,
}

/// Generate `n` images in memory. For large sets prefer
/// [`SynthGenerator::render`] per index.
pub fn synth_generate(pattern: &SynthPattern, rule: LabelRule, n: usize, dims: (u32, u32), seed: u64) -> Result<SynthSet> {
    let gen = SynthGenerator::new(pattern.clone(), rule, dims, seed)?;
    let mut set = SynthSet::default();
    for i in 0..n {
        let s = gen.render(i);
        set.samples.push((s.image, s.entry.label));
        set.manifest.push(s.entry);
        set.truths.push(s.truth);
    }
    Ok(set)
}

fn jitter(rng: &mut ChaCha8Rng, amp: f64) -> f64 {
    if amp > 0.0 {
        rng.random_range(-amp..=amp)
    } else {
        0.0
    }
}

fn add(rgb: [u8; 3], delta: [f64; 3]) -> [u8; 3] {
    [0, 1, 2].map(|c| quantize(f64::from(rgb[c]) + delta[c]))
}

/// Paint an ellipse, restricted to pixels whose centres satisfy `clip`.
fn paint_ellipse(
    img: &mut RasterImage,
    (cx, cy): (f64, f64),
    (rx, ry): (f64, f64),
    rgb: [u8; 3],
    noise: f64,
    clip: &dyn Fn(f64, f64) -> bool,
    rng: &mut ChaCha8Rng,
) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - rx).floor() as i64).max(0);
    let x1 = ((cx + rx).ceil() as i64).min(w - 1);
    let y0 = ((cy - ry).floor() as i64).max(0);
    let y1 = ((cy + ry).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let u = (x as f64 - cx) / rx;
            let v = (y as f64 - cy) / ry;
            if u * u + v * v <= 1.0 && clip(x as f64 + 0.5, y as f64 + 0.5) {
                let d = [jitter(rng, noise), jitter(rng, noise), jitter(rng, noise)];
                img.set_pixel(x as u32, y as u32, add(rgb, d));
            }
        }
    }
}

fn render_image(
    pattern: &SynthPattern,
    (w, h): (u32, u32),
    label: Label,
    image_id: &str,
    rng: &mut ChaCha8Rng,
) -> (RasterImage, GroundTruth) {
    let base = &pattern.base;
    let min_dim = f64::from(w.min(h));

    // Tissue outline.
    let blob = Blob {
        cx: f64::from(w) / 2.0 + jitter(rng, 0.02 * min_dim),
        cy: f64::from(h) / 2.0 + jitter(rng, 0.02 * min_dim),
        radius: BLOB_RADIUS * min_dim * rng.random_range(0.95..=1.0),
        harmonics: HARMONICS
            .iter()
            .map(|&k| (k, rng.random_range(0.0..=MAX_HARMONIC_TOTAL / 4.0), rng.random_range(0.0..TAU)))
            .collect(),
    };
    let table: Vec<f64> = (0..ANGLE_STEPS)
        .map(|i| blob.boundary_radius(i as f64 / ANGLE_STEPS as f64 * TAU))
        .collect();
    let r_min = table.iter().copied().fold(f64::INFINITY, f64::min);
    let r_max = table.iter().copied().fold(0.0, f64::max);
    let boundary_at = |theta: f64| {
        let t = theta.rem_euclid(TAU) / TAU * ANGLE_STEPS as f64;
        table[(t as usize).min(ANGLE_STEPS - 1)]
    };
    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x - blob.cx, y - blob.cy);
        let d2 = dx * dx + dy * dy;
        if d2 < r_min * r_min {
            true
        } else if d2 >= r_max * r_max {
            false
        } else {
            d2.sqrt() < boundary_at(dy.atan2(dx))
        }
    };

    let positive = label.is_positive();
    let shift: [f64; 3] = if positive {
        pattern.texture_shift.map(f64::from)
    } else {
        [0.0; 3]
    };
    let offset = [jitter(rng, base.image_jitter), jitter(rng, base.image_jitter), jitter(rng, base.image_jitter)];
    let tissue = [0, 1, 2].map(|c| f64::from(base.tissue_rgb[c]) + offset[c] + shift[c]);
    let (fx, fy) = (rng.random_range(0.01..0.03), rng.random_range(0.01..0.03));
    let (px, py) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));

    let wave_x: Vec<f64> = (0..w).map(|x| ((f64::from(x) + 0.5) * fx + px).sin()).collect();
    let wave_y: Vec<f64> = (0..h).map(|y| base.modulation * ((f64::from(y) + 0.5) * fy + py).sin()).collect();

    let mut tissue_pixels = 0u64;
    let mut left_tissue = 0u64;
    let lut = |amp: f64| -> Vec<f64> { (0..256).map(|b| amp * (f64::from(b) / 255.0 * 2.0 - 1.0)).collect() };
    let (tissue_noise, bg_noise) = (lut(base.noise), lut(base.background_noise));
    let bg = base.background_rgb.map(f64::from);
    let bg_lut: [Vec<u8>; 3] = [0, 1, 2].map(|c| bg_noise.iter().map(|&n| quantize(bg[c] + n)).collect());
    let (r_in2, r_out2) = (r_min * r_min, r_max * r_max);
    let mut row_dy2 = 0.0;
    let mut img = RasterImage::from_fn(w, h, |x, y| {
        let xf = f64::from(x) + 0.5;
        let dx = xf - blob.cx;
        if x == 0 {
            row_dy2 = (f64::from(y) + 0.5 - blob.cy).powi(2);
        }
        let d2 = dx * dx + row_dy2;
        let is_tissue = d2 < r_in2
            || (d2 < r_out2 && d2.sqrt() < boundary_at((f64::from(y) + 0.5 - blob.cy).atan2(dx)));
        let n: u32 = rng.random();
        let b = |k: u32| ((n >> (k * 8)) & 0xff) as usize;
        if is_tissue {
            tissue_pixels += 1;
            if xf < blob.cx {
                left_tissue += 1;
            }
            let m = wave_y[y as usize] * wave_x[x as usize];
            [
                quantize(tissue[0] + m + tissue_noise[b(0)]),
                quantize(tissue[1] + m + tissue_noise[b(1)]),
                quantize(tissue[2] + m + tissue_noise[b(2)]),
            ]
        } else {
            [bg_lut[0][b(0)], bg_lut[1][b(1)], bg_lut[2][b(2)]]
        }
    })
    .expect("dimensions validated");

    // Nuclei, identical statistics in both classes.
    let (bx0, bx1) = ((blob.cx - r_max).max(0.0), (blob.cx + r_max).min(f64::from(w)));
    let (by0, by1) = ((blob.cy - r_max).max(0.0), (blob.cy + r_max).min(f64::from(h)));
    let sample_in = |rng: &mut ChaCha8Rng, accept: &dyn Fn(f64, f64) -> bool| loop {
        let x = rng.random_range(bx0..bx1).floor() + 0.5;
        let y = rng.random_range(by0..by1).floor() + 0.5;
        if inside(x, y) && accept(x, y) {
            return (x, y);
        }
    };
    let nuclei_area = std::f64::consts::PI * 3.2 * 3.2;
    let n_nuclei = (base.nuclei_density * tissue_pixels as f64 / nuclei_area).round() as usize;
    for _ in 0..n_nuclei {
        let (x, y) = sample_in(rng, &|_, _| true);
        let r = rng.random_range(2.5..=4.0);
        paint_ellipse(&mut img, (x, y), (r, r), base.nuclei_rgb, 8.0, &inside, rng);
    }

    let mut marks = Vec::new();
    let mut cluster = None;
    let mut expected_marks = (0, 0);
    if positive {
        let fs = f64::from(pattern.feature_size);
        let mark_area = std::f64::consts::PI * (fs / 2.0).powi(2);
        let region_area = match pattern.kind {
            PatternKind::LocalCluster => std::f64::consts::PI * (f64::from(pattern.cluster_diameter) / 2.0).powi(2),
            PatternKind::EdgeDistributed => {
                let band = f64::from(pattern.edge_band);
                table.iter().map(|&rb| (rb * rb - (rb - band).max(0.0).powi(2)) / 2.0).sum::<f64>() * TAU
                    / ANGLE_STEPS as f64
            }
            PatternKind::HalfTissue => left_tissue as f64,
            PatternKind::GlobalDiffuse => tissue_pixels as f64,
        };
        let expected = pattern.feature_density * region_area / mark_area;
        expected_marks = ((0.9 * expected).floor() as usize, (1.1 * expected).ceil() as usize);
        let count = ((expected * rng.random_range(0.9..=1.1)).round() as usize).clamp(expected_marks.0, expected_marks.1);

        if pattern.kind == PatternKind::LocalCluster {
            let cr = f64::from(pattern.cluster_diameter) / 2.0;
            // Inner half of the blob, away from the ragged edge.
            let reach = (r_min - cr - fs).min(0.5 * r_min);
            let (cx, cy) = loop {
                let x = rng.random_range(-reach..=reach);
                let y = rng.random_range(-reach..=reach);
                if x * x + y * y <= reach * reach {
                    break (blob.cx + x, blob.cy + y);
                }
            };
            cluster = Some(Cluster {
                cx,
                cy,
                diameter: f64::from(pattern.cluster_diameter),
            });
        }

        for _ in 0..count {
            let (x, y) = match pattern.kind {
                PatternKind::LocalCluster => {
                    let c = cluster.expect("set above");
                    let r = (c.diameter - fs).max(0.0) / 2.0;
                    loop {
                        let u = rng.random_range(-r..=r);
                        let v = rng.random_range(-r..=r);
                        if u * u + v * v <= r * r {
                            break (c.cx + u, c.cy + v);
                        }
                    }
                }
                PatternKind::EdgeDistributed => loop {
                    let theta = rng.random_range(0.0..TAU);
                    let depth = rng.random_range(fs / 2.0..=f64::from(pattern.edge_band));
                    let r = boundary_at(theta) - depth;
                    let (x, y) = (blob.cx + r * theta.cos(), blob.cy + r * theta.sin());
                    if inside(x, y) {
                        break (x, y);
                    }
                },
                PatternKind::HalfTissue => sample_in(rng, &|x, _| x < blob.cx),
                PatternKind::GlobalDiffuse => sample_in(rng, &|_, _| true),
            };
            let rx = fs / 2.0 * rng.random_range(0.8..=1.2);
            let ry = fs / 2.0 * rng.random_range(0.8..=1.2);
            paint_ellipse(&mut img, (x, y), (rx, ry), pattern.mark_rgb, 6.0, &inside, rng);
            marks.push(Mark { x, y, rx, ry });
        }
    }

    let truth = GroundTruth {
        image_id: image_id.to_string(),
        label,
        pattern: pattern.kind,
        width: w,
        height: h,
        blob,
        tissue_pixels,
        marks,
        cluster,
        expected_marks,
    };
    (img, truth)
}
