//! Patch classifier contract and the histogram + logistic reference model.
//!
//! [`PatchClassifier`] is the slot a real backbone plugs into. The bundled
//! [`ToyClassifier`] maps an image to per-cell colour histograms and scores
//! them with logistic regression trained by mini-batch gradient descent.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentError, AugmentSpec};
use crate::imaging::RasterImage;
use crate::seeds::{self, Stream};
use crate::Label;

const CHECKPOINT_FORMAT: &str = "patchscope-toy-classifier";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("classifier expects {expected}x{expected} input, got {width}x{height}")]
    InputSize { expected: u32, width: u32, height: u32 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

/// Anything that scores a square image with the probability of the
/// positive class.
pub trait PatchClassifier: Send + Sync {
    /// Side length of the square inputs the classifier consumes.
    fn input_size(&self) -> u32;

    /// Probability of `ActiveEoE` in `[0, 1]`. Must be deterministic.
    fn predict_proba(&self, img: &RasterImage) -> Result<f64>;
}

/// Per-cell, per-channel intensity histograms over a `grid` x `grid`
/// partition of the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub grid: u32,
    pub bins: u32,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self { grid: 4, bins: 8 }
    }
}

impl FeatureExtractor {
    pub fn len(&self) -> usize {
        (self.grid * self.grid * 3 * self.bins) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated normalised histograms, cell-major (row-major cells),
    /// then channel, then bin.
    pub fn extract(&self, img: &RasterImage) -> Vec<f64> {
        let g = self.grid as usize;
        let bins = self.bins as usize;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let col_cell: Vec<usize> = (0..w).map(|x| x * g / w).collect();
        let mut counts = vec![0u32; self.len()];
        let mut cell_pixels = vec![0u32; g * g];
        let raw = img.as_raw();
        for y in 0..h {
            let row_cell = y * g / h;
            let row = &raw[y * w * 3..(y + 1) * w * 3];
            for (x, px) in row.chunks_exact(3).enumerate() {
                let cell = row_cell * g + col_cell[x];
                cell_pixels[cell] += 1;
                let base = cell * 3 * bins;
                for c in 0..3 {
                    let bin = usize::from(px[c]) * bins / 256;
                    counts[base + c * bins + bin] += 1;
                }
            }
        }
        counts
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let total = cell_pixels[i / (3 * bins)];
                if total == 0 {
                    0.0
                } else {
                    f64::from(n) / f64::from(total)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Coefficient of the `l2 * ||w||^2` penalty (bias excluded).
    pub l2: f64,
    /// Standard deviation of the random weight initialisation; zero keeps
    /// the model zero-initialised.
    pub init_std: f64,
    pub schedule: LrSchedule,
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    /// `learning_rate` in every epoch.
    Constant,
    /// Epoch `e` of `n` uses `learning_rate * (n - e) / n`.
    #[default]
    Linear,
}

impl LrSchedule {
    pub fn rate(self, base: f64, epoch: u32, epochs: u32) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Linear => base * f64::from(epochs - epoch.min(epochs)) / f64::from(epochs.max(1)),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.1,
            batch_size: 4,
            seed: 0,
            l2: 0.0,
            init_std: 0.0,
            schedule: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ClassifierError::Argument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ClassifierError::Argument(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(ClassifierError::Argument(format!(
                "init_std must be non-negative, got {}",
                self.init_std
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One training example in feature space.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub target: f64,
}

/// Mean logistic loss over `batch` plus `l2 * ||weights||^2`.
pub fn loss(weights: &[f64], bias: f64, l2: f64, batch: &[Example<'_>]) -> f64 {
    let data: f64 = batch
        .iter()
        .map(|ex| {
            let z = dot(weights, ex.features) + bias;
            softplus(z) - ex.target * z
        })
        .sum::<f64>()
        / batch.len() as f64;
    data + l2 * dot(weights, weights)
}

/// Analytic gradient of [`loss`] with respect to (weights, bias).
pub fn gradient(weights: &[f64], bias: f64, l2: f64, batch: &[Example<'_>]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let residual = (sigmoid(dot(weights, ex.features) + bias) - ex.target) * scale;
        for (g, &x) in gw.iter_mut().zip(ex.features) {
            *g += residual * x;
        }
        gb += residual;
    }
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g += 2.0 * l2 * w;
    }
    (gw, gb)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Histogram features scored by logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyClassifier {
    pub input_size: u32,
    pub extractor: FeatureExtractor,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: ToyClassifier,
}

/// A trained model plus the full-data loss recorded after each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyClassifier,
    pub epoch_losses: Vec<f64>,
}

/// Indexed access to labelled training images, so large patch sets can be
/// produced lazily instead of held in memory.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> Label;
    fn image(&self, index: usize) -> Result<RasterImage>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [(RasterImage, Label)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn label(&self, index: usize) -> Label {
        self[index].1
    }
    fn image(&self, index: usize) -> Result<RasterImage> {
        Ok(self[index].0.clone())
    }
}

impl ToyClassifier {
    /// Zero-initialised model with the default 4x4 grid and 8 bins.
    pub fn new(input_size: u32) -> Self {
        Self::with_extractor(input_size, FeatureExtractor::default())
    }

    pub fn with_extractor(input_size: u32, extractor: FeatureExtractor) -> Self {
        Self {
            input_size,
            extractor,
            weights: vec![0.0; extractor.len()],
            bias: 0.0,
            train_config: None,
        }
    }

    /// Histogram features of a conforming `input_size` square image.
    pub fn features(&self, img: &RasterImage) -> Result<Vec<f64>> {
        if img.width() != self.input_size || img.height() != self.input_size {
            return Err(ClassifierError::InputSize {
                expected: self.input_size,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(self.extractor.extract(img))
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features) + self.bias
    }

    pub fn predict_features(&self, features: &[f64]) -> f64 {
        sigmoid(self.score(features))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&ckpt).map_err(|e| ClassifierError::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(ClassifierError::Format(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        if ckpt.model.weights.len() != ckpt.model.extractor.len() {
            return Err(ClassifierError::Format(format!(
                "weight vector has {} entries, extractor produces {}",
                ckpt.model.weights.len(),
                ckpt.model.extractor.len()
            )));
        }
        Ok(ckpt.model)
    }

    fn initialised(&self, cfg: &TrainConfig) -> Self {
        let mut model = self.clone();
        if cfg.init_std > 0.0 {
            let mut rng = seeds::stream_rng(cfg.seed, Stream::Init);
            let normal = Normal::new(0.0, cfg.init_std).expect("validated std");
            for w in &mut model.weights {
                *w = normal.sample(&mut rng);
            }
        }
        model
    }
}

impl PatchClassifier for ToyClassifier {
    fn input_size(&self) -> u32 {
        self.input_size
    }

    fn predict_proba(&self, img: &RasterImage) -> Result<f64> {
        Ok(self.predict_features(&self.features(img)?))
    }
}

/// Train on in-memory images; see [`train_source`].
pub fn train(
    model: &ToyClassifier,
    data: &[(RasterImage, Label)],
    cfg: &TrainConfig,
    spec: &AugmentSpec,
) -> Result<ToyClassifier> {
    Ok(train_source(model, data, cfg, spec)?.model)
}

/// Mini-batch gradient descent on mean logistic loss plus L2, stepping in
/// mean-centred feature coordinates.
///
/// The epoch order comes from the shuffle stream of `cfg.seed`; each
/// sample's augmentation in each epoch comes from its own stream derived
/// from the augment stream, so results are independent of thread count.
/// With an identity augmentation spec features are extracted once.
pub fn train_source<S: SampleSource + ?Sized>(
    model: &ToyClassifier,
    data: &S,
    cfg: &TrainConfig,
    spec: &AugmentSpec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(ClassifierError::Argument("training data is empty".into()));
    }
    let labels: Vec<Label> = (0..data.len()).map(|i| data.label(i)).collect();
    if spec.is_identity() {
        let features = extract_all(model, data, spec, None)?;
        return train_features(model, &features, &labels, cfg);
    }

    let mut state = model.initialised(cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = seeds::stream_rng(cfg.seed, Stream::Shuffle);
    let augment_seed = seeds::stream_seed(cfg.seed, Stream::Augment);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        let epoch_seed = seeds::derive_indexed(augment_seed, "epoch", u64::from(epoch));
        let features = extract_all(model, data, spec, Some(epoch_seed))?;
        order.shuffle(&mut shuffle);
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        run_epoch(&mut state, &order, &features, &labels, &feature_mean(&features), lr, cfg);
        epoch_losses.push(full_loss(&state, &features, &labels, cfg.l2));
    }
    state.train_config = Some(cfg.clone());
    Ok(TrainOutcome {
        model: state,
        epoch_losses,
    })
}

fn extract_all<S: SampleSource + ?Sized>(
    model: &ToyClassifier,
    data: &S,
    spec: &AugmentSpec,
    epoch_seed: Option<u64>,
) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let img = data.image(i)?;
            let img = match epoch_seed {
                Some(seed) => {
                    let mut rng = seeds::rng(seeds::derive_indexed(seed, "sample", i as u64));
                    augment::augment(&img, spec, &mut rng)?
                }
                None => img,
            };
            model.features(&img)
        })
        .collect()
}

/// Train directly on precomputed feature vectors (no augmentation).
pub fn train_features(
    model: &ToyClassifier,
    features: &[Vec<f64>],
    labels: &[Label],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(ClassifierError::Argument("training data is empty".into()));
    }
    if features.len() != labels.len() {
        return Err(ClassifierError::Argument(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != model.weights.len()) {
        return Err(ClassifierError::Argument(format!(
            "feature vector has {} entries, model expects {}",
            bad.len(),
            model.weights.len()
        )));
    }
    let mut state = model.initialised(cfg);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut shuffle = seeds::stream_rng(cfg.seed, Stream::Shuffle);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs as usize);
    let mean = feature_mean(features);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        run_epoch(&mut state, &order, features, labels, &mean, lr, cfg);
        epoch_losses.push(full_loss(&state, features, labels, cfg.l2));
    }
    state.train_config = Some(cfg.clone());
    Ok(TrainOutcome {
        model: state,
        epoch_losses,
    })
}

/// Per-component mean of the feature vectors.
pub fn feature_mean(features: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; features.first().map_or(0, Vec::len)];
    for f in features {
        for (m, &x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    let n = features.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

// One pass of mini-batch steps taken in mean-centred coordinates: with
// score = w.(x - mean) + c the bias-like directions of the histogram
// features (each histogram sums to one) no longer alias the intercept.
// The objective is unchanged because the bias carries no penalty; the
// model is stored back in uncentred form.
fn run_epoch(
    state: &mut ToyClassifier,
    order: &[usize],
    features: &[Vec<f64>],
    labels: &[Label],
    mean: &[f64],
    lr: f64,
    cfg: &TrainConfig,
) {
    let mut centred_bias = state.bias + dot(&state.weights, mean);
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<Example<'_>> = chunk
            .iter()
            .map(|&i| Example {
                features: &features[i],
                target: labels[i].target(),
            })
            .collect();
        let (gw, gb) = gradient(&state.weights, state.bias, cfg.l2, &batch);
        for ((w, g), m) in state.weights.iter_mut().zip(&gw).zip(mean) {
            *w -= lr * (g - gb * m);
        }
        centred_bias -= lr * gb;
        state.bias = centred_bias - dot(&state.weights, mean);
    }
}

fn full_loss(state: &ToyClassifier, features: &[Vec<f64>], labels: &[Label], l2: f64) -> f64 {
    let all: Vec<Example<'_>> = features
        .iter()
        .zip(labels)
        .map(|(f, l)| Example {
            features: f,
            target: l.target(),
        })
        .collect();
    loss(&state.weights, state.bias, l2, &all)
}

/// Draw `n` uniform values in `[0, 1)` as a feature vector; used by
/// gradient probes and tests.
pub fn random_features<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: u32, rgb: [u8; 3]) -> RasterImage {
        RasterImage::filled(n, n, rgb).unwrap()
    }

    #[test]
    fn constant_image_one_hot_histograms() {
        let ex = FeatureExtractor::default();
        let f = ex.extract(&flat(16, [0, 100, 255]));
        assert_eq!(f.len(), 384);
        for cell in 0..16 {
            for (c, v) in [0usize, 100, 255].into_iter().enumerate() {
                let hist = &f[(cell * 3 + c) * 8..(cell * 3 + c + 1) * 8];
                let bin = v * 8 / 256;
                for (b, &h) in hist.iter().enumerate() {
                    assert_eq!(h, if b == bin { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn mirror_permutes_cells() {
        let mut rng = seeds::rng(4);
        let img = RasterImage::from_fn(32, 32, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        let ex = FeatureExtractor::default();
        let a = ex.extract(&img);
        let b = ex.extract(&augment::flip_horizontal(&img));
        let cells = |f: &[f64]| {
            let mut v: Vec<Vec<u64>> = f.chunks(24).map(|c| c.iter().map(|x| x.to_bits()).collect()).collect();
            v.sort();
            v
        };
        assert_eq!(cells(&a), cells(&b));
    }

    #[test]
    fn histograms_sum_to_one() {
        let mut rng = seeds::rng(5);
        let img = RasterImage::from_fn(30, 30, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        let f = FeatureExtractor::default().extract(&img);
        for hist in f.chunks(8) {
            assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(hist.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn wrong_size_is_contract_violation() {
        let m = ToyClassifier::new(8);
        assert!(matches!(
            m.predict_proba(&flat(9, [0; 3])),
            Err(ClassifierError::InputSize { expected: 8, .. })
        ));
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = ToyClassifier::new(8);
        assert_eq!(m.predict_proba(&flat(8, [10, 20, 30])).unwrap(), 0.5);
        let data = vec![(flat(8, [0; 3]), Label::ActiveEoE)];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let t = train(&m, &data, &cfg, &AugmentSpec::identity()).unwrap();
        assert_eq!(t.predict_proba(&flat(8, [200; 3])).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_probability() {
        let mut m = ToyClassifier::with_extractor(4, FeatureExtractor { grid: 1, bins: 2 });
        m.weights = vec![0.5, -1.0, 2.0, 0.0, 0.0, 1.0];
        m.bias = -0.25;
        let f = [0.2, 0.8, 1.0, 0.0, 0.5, 0.5];
        // 0.1 - 0.8 + 2.0 + 0.5 - 0.25 = 1.55
        let expected = 1.0 / (1.0 + (-1.55f64).exp());
        assert!((m.predict_features(&f) - expected).abs() < 1e-15);
    }

    #[test]
    fn positive_scaling_keeps_class() {
        let mut rng = seeds::rng(8);
        let mut m = ToyClassifier::with_extractor(4, FeatureExtractor { grid: 1, bins: 2 });
        m.weights = random_features(&mut rng, 6).iter().map(|w| w - 0.5).collect();
        m.bias = 0.1;
        let mut doubled = m.clone();
        doubled.weights.iter_mut().for_each(|w| *w *= 2.0);
        doubled.bias *= 2.0;
        for _ in 0..50 {
            let f = random_features(&mut rng, 6);
            assert_eq!(m.predict_features(&f) >= 0.5, doubled.predict_features(&f) >= 0.5);
        }
    }

    #[test]
    fn empty_data_rejected() {
        let m = ToyClassifier::new(8);
        let empty: Vec<(RasterImage, Label)> = vec![];
        assert!(matches!(
            train(&m, &empty, &TrainConfig::default(), &AugmentSpec::identity()),
            Err(ClassifierError::Argument(_))
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = ToyClassifier::new(16);
        for (i, w) in m.weights.iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin() / 3.0;
        }
        m.bias = -1.0 / 7.0;
        m.train_config = Some(TrainConfig::default());
        m.save(&path).unwrap();
        assert_eq!(ToyClassifier::load(&path).unwrap(), m);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format\": \"patchscope-toy-classifier\""));
        fs::write(&path, text.replace("\"version\": 1", "\"version\": 9")).unwrap();
        assert!(ToyClassifier::load(&path).is_err());
    }
}
