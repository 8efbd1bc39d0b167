//! Confusion counts, rates, ROC-space points, probability histograms,
//! central-band mass and the random-label control.
//!
//! The positive class is `ActiveEoE`. Rates over an empty class are
//! reported as `None` (serialised as `null`) rather than zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{ImageOutcome, PredictionRecord, StrategyConfig};
use crate::seeds;
use crate::Label;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BAND: (f64, f64) = (0.4, 0.6);
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no scored items to evaluate")]
    Empty,
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::ActiveEoE, Label::ActiveEoE) => self.tp += 1,
            (Label::NonEoE, Label::ActiveEoE) => self.fn_ += 1,
            (Label::NonEoE, Label::NonEoE) => self.tn += 1,
            (Label::ActiveEoE, Label::NonEoE) => self.fp += 1,
        }
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let total = self.total();
        Metrics {
            tpr: ratio(self.tp, self.positives()),
            tnr: ratio(self.tn, self.negatives()),
            accuracy: ratio(self.tp + self.tn, total).unwrap_or(f64::NAN),
            pp: ratio(self.tp + self.fp, total).unwrap_or(f64::NAN),
        }
    }
}

/// Rates as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: f64,
    /// Predicted prevalence: fraction of items predicted positive.
    pub pp: f64,
}

impl Metrics {
    /// Percentages to one decimal and PP to two, e.g.
    /// `74.6% 96.8% 85.7% 0.39`.
    pub fn display_row(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        format!(
            "{} {} {} {:.2}",
            pct(self.tpr),
            pct(self.tnr),
            pct(Some(self.accuracy)),
            self.pp
        )
    }
}

/// Counts and rates over determinate items plus the number of
/// indeterminate items that were excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub indeterminate: u64,
}

/// Metrics over `(prediction, truth)` pairs; `None` predictions are
/// indeterminate and counted separately.
pub fn compute_metrics<I>(pairs: I) -> Result<MetricsSummary, EvalError>
where
    I: IntoIterator<Item = (Option<Label>, Label)>,
{
    let mut counts = ConfusionCounts::default();
    let mut indeterminate = 0;
    for (pred, truth) in pairs {
        match pred {
            Some(p) => counts.add(p, truth),
            None => indeterminate += 1,
        }
    }
    if counts.total() == 0 {
        return Err(EvalError::Empty);
    }
    Ok(MetricsSummary {
        counts,
        metrics: counts.metrics(),
        indeterminate,
    })
}

/// A point in ROC space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// `(1 - tnr, tpr)`; `None` when either rate is undefined.
pub fn roc_point(m: &Metrics) -> Option<RocPoint> {
    Some(RocPoint {
        fpr: 1.0 - m.tnr?,
        tpr: m.tpr?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbHistogram {
    /// Class of the scored items (by truth).
    pub class: Label,
    /// `bins + 1` uniform edges over `[0, 1]`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ProbHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Uniform histogram of probabilities over `[0, 1]`; bins are half-open
/// except the last, which also holds 1.0.
pub fn probability_histogram(probs: &[f64], class: Label, bins: usize) -> Result<ProbHistogram, EvalError> {
    if bins == 0 {
        return Err(EvalError::Argument("histogram needs at least one bin".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::Argument(format!("probability {p} outside [0, 1]")));
    }
    let mut counts = vec![0u64; bins];
    for &p in probs {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(ProbHistogram {
        class,
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        counts,
    })
}

/// Fraction of probabilities inside the closed band `[lo, hi]`. High
/// values mean mass piles up around 0.5 (ambiguous predictions).
pub fn central_band_mass(probs: &[f64], band: (f64, f64)) -> Result<f64, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Argument("central band mass of an empty set".into()));
    }
    let (lo, hi) = band;
    if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) {
        return Err(EvalError::Argument(format!("band [{lo}, {hi}] is empty")));
    }
    let inside = probs.iter().filter(|&&p| p >= lo && p <= hi).count();
    Ok(inside as f64 / probs.len() as f64)
}

/// `n` random labels with an exact 1:1 class prior: half positive (the
/// odd one out decided by a coin flip), in uniformly random order.
pub fn random_labels(n: usize, seed: u64) -> Vec<Label> {
    let mut rng = seeds::rng(seeds::derive(seed, "random-labels"));
    let positives = n / 2 + usize::from(n % 2 == 1 && rng.random_bool(0.5));
    let mut labels: Vec<Label> = (0..n).map(|i| Label::from_positive(i < positives)).collect();
    labels.shuffle(&mut rng);
    labels
}

/// Replace every label with a balanced random label; items are untouched
/// and the original labels are ignored.
pub fn random_label_control<T: Clone>(data: &[(T, Label)], seed: u64) -> Vec<(T, Label)> {
    data.iter()
        .zip(random_labels(data.len(), seed))
        .map(|((item, _), l)| (item.clone(), l))
        .collect()
}

/// Probability that a random positive scores above a random negative
/// (ties count half). `None` if either class is absent.
pub fn separation_auc(scored: &[(f64, Label)]) -> Option<f64> {
    let pos: Vec<f64> = scored.iter().filter(|s| s.1.is_positive()).map(|s| s.0).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| !s.1.is_positive()).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Two-class probability histograms plus the central-band mass of all
/// scored items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub positive: ProbHistogram,
    pub negative: ProbHistogram,
    pub central_band: (f64, f64),
    pub central_band_mass: Option<f64>,
}

impl Distribution {
    pub fn from_scored(scored: &[(f64, Label)], bins: usize, band: (f64, f64)) -> Result<Self, EvalError> {
        let of = |class: Label| -> Vec<f64> { scored.iter().filter(|s| s.1 == class).map(|s| s.0).collect() };
        let all: Vec<f64> = scored.iter().map(|s| s.0).collect();
        Ok(Self {
            positive: probability_histogram(&of(Label::ActiveEoE), Label::ActiveEoE, bins)?,
            negative: probability_histogram(&of(Label::NonEoE), Label::NonEoE, bins)?,
            central_band: band,
            central_band_mass: central_band_mass(&all, band).ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub display: String,
    pub roc: Option<RocPoint>,
}

impl From<&MetricsSummary> for MetricsBlock {
    fn from(s: &MetricsSummary) -> Self {
        Self {
            counts: s.counts,
            metrics: s.metrics,
            display: s.metrics.display_row(),
            roc: roc_point(&s.metrics),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub image_id: String,
    pub message: String,
}

/// Random-label control results for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub seed: u64,
    /// Patch-level accuracy against the control labels of the validation
    /// patches.
    pub accuracy_vs_control_labels: Option<f64>,
    pub patch: Option<MetricsBlock>,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub image: Option<MetricsBlock>,
    pub patch: Option<MetricsBlock>,
    pub distribution: Option<Distribution>,
    pub indeterminate: Vec<String>,
    pub errors: Vec<ErrorEntry>,
    pub control: Option<ControlReport>,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub strategies: Vec<StrategyReport>,
    pub errors: Vec<ErrorEntry>,
}

impl Default for EvalReport {
    fn default() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            strategies: Vec::new(),
            errors: Vec::new(),
        }
    }
}

impl EvalReport {
    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty() || self.strategies.iter().any(|s| !s.errors.is_empty())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serialisable")
    }
}

/// Per-patch `(probability, parent truth)` pairs for predicted images.
pub fn patch_scores(records: &[PredictionRecord], truth: &BTreeMap<String, Label>) -> Vec<(f64, Label)> {
    records
        .iter()
        .filter_map(|r| truth.get(&r.image_id).map(|&t| (r, t)))
        .flat_map(|(r, t)| r.patch_probs.iter().map(move |p| (p.probability, t)))
        .collect()
}

/// Build a strategy report from prediction records and ground truth.
/// Records whose id is absent from `truth` are reported as errors.
pub fn evaluate_records(
    strategy: &str,
    patch_level: bool,
    records: &[PredictionRecord],
    truth: &BTreeMap<String, Label>,
) -> StrategyReport {
    let mut errors = Vec::new();
    let mut pairs = Vec::new();
    let mut indeterminate = Vec::new();
    for r in records {
        match truth.get(&r.image_id) {
            None => errors.push(ErrorEntry {
                image_id: r.image_id.clone(),
                message: "no ground truth for this image id".into(),
            }),
            Some(&t) => {
                let verdict = r.label.label();
                if verdict.is_none() {
                    indeterminate.push(r.image_id.clone());
                }
                pairs.push((verdict, t));
            }
        }
    }
    let image = compute_metrics(pairs).ok().map(|s| MetricsBlock::from(&s));
    let scores = patch_scores(records, truth);
    let patch = if patch_level {
        compute_metrics(scores.iter().map(|&(p, t)| (Some(Label::from_positive(p >= 0.5)), t)))
            .ok()
            .map(|s| MetricsBlock::from(&s))
    } else {
        None
    };
    let distribution = Distribution::from_scored(&scores, DEFAULT_BINS, DEFAULT_BAND).ok();
    StrategyReport {
        strategy: strategy.to_string(),
        image,
        patch,
        distribution,
        indeterminate,
        errors,
        control: None,
        predictions: records.to_vec(),
    }
}

/// Build a strategy report straight from experiment outcomes.
pub fn evaluate_outcomes(
    strategy: &StrategyConfig,
    outcomes: &[ImageOutcome],
    truth: &BTreeMap<String, Label>,
) -> StrategyReport {
    let name = strategy.name();
    let records: Vec<PredictionRecord> = outcomes.iter().filter_map(|o| o.record(&name)).collect();
    let mut report = evaluate_records(&name, strategy.kind.is_patch(), &records, truth);
    for o in outcomes {
        if let ImageOutcome::Failed { image_id, message } = o {
            report.errors.push(ErrorEntry {
                image_id: image_id.clone(),
                message: message.clone(),
            });
        }
    }
    report
}

/// Build the control block: `probs` are the control model's validation
/// patch probabilities in a fixed order, `truth` the parent labels of
/// those patches.
pub fn control_report(probs: &[f64], truth: &[Label], seed: u64) -> ControlReport {
    let control_labels = random_labels(probs.len(), seed);
    let hard: Vec<Label> = probs.iter().map(|&p| Label::from_positive(p >= 0.5)).collect();
    let accuracy_vs_control_labels = (!probs.is_empty()).then(|| {
        hard.iter().zip(&control_labels).filter(|(a, b)| a == b).count() as f64 / probs.len() as f64
    });
    let patch = compute_metrics(hard.iter().zip(truth).map(|(&h, &t)| (Some(h), t)))
        .ok()
        .map(|s| MetricsBlock::from(&s));
    let scored: Vec<(f64, Label)> = probs.iter().copied().zip(truth.iter().copied()).collect();
    ControlReport {
        seed,
        accuracy_vs_control_labels,
        patch,
        distribution: Distribution::from_scored(&scored, DEFAULT_BINS, DEFAULT_BAND)
            .expect("probabilities are in [0, 1] and bins > 0"),
    }
}

/// ROC-space scatter with the chance diagonal.
pub fn roc_svg(points: &[(String, RocPoint)]) -> String {
    const S: f64 = 400.0;
    const M: f64 = 50.0;
    let map = |p: &RocPoint| (M + p.fpr * S, M + (1.0 - p.tpr) * S);
    let mut svg = String::new();
    let size = S + 2.0 * M;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="{M}" y="{M}" width="{S}" height="{S}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{M}" y1="{}" x2="{}" y2="{M}" stroke="gray" stroke-dasharray="4"/>"#,
        M + S,
        M + S
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}">1 - TNR</text>"#, M + S / 2.0 - 20.0, M + S + 35.0);
    let _ = writeln!(svg, r#"<text x="10" y="{}" transform="rotate(-90 10 {})">TPR</text>"#, M + S / 2.0, M + S / 2.0);
    for (name, p) in points {
        let (x, y) = map(p);
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, x + 6.0, y - 6.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Paired bar charts: true-label vs control distributions, per class.
pub fn histogram_svg(title: &str, panels: &[(&str, &ProbHistogram)]) -> String {
    const W: f64 = 300.0;
    const H: f64 = 160.0;
    const M: f64 = 30.0;
    let width = panels.len() as f64 * (W + M) + M;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="11">"#,
        H + 3.0 * M
    );
    let _ = writeln!(svg, r#"<text x="{M}" y="16">{title}</text>"#);
    for (i, (name, hist)) in panels.iter().enumerate() {
        let x0 = M + i as f64 * (W + M);
        let y0 = 2.0 * M;
        let max = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bw = W / hist.counts.len() as f64;
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{name}</text>"#, y0 - 6.0);
        for (b, &c) in hist.counts.iter().enumerate() {
            let h = c as f64 / max * H;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="indianred"/>"#,
                x0 + b as f64 * bw,
                y0 + H - h,
                bw - 1.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            y0 + H,
            x0 + W,
            y0 + H
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{PatchProb, Verdict};

    fn from_counts(tp: u64, fn_: u64, tn: u64, fp: u64) -> Vec<(Option<Label>, Label)> {
        let mut v = Vec::new();
        v.extend(std::iter::repeat_n((Some(Label::ActiveEoE), Label::ActiveEoE), tp as usize));
        v.extend(std::iter::repeat_n((Some(Label::NonEoE), Label::ActiveEoE), fn_ as usize));
        v.extend(std::iter::repeat_n((Some(Label::NonEoE), Label::NonEoE), tn as usize));
        v.extend(std::iter::repeat_n((Some(Label::ActiveEoE), Label::NonEoE), fp as usize));
        v
    }

    #[test]
    fn table_rows() {
        let s = compute_metrics(from_counts(47, 16, 61, 2)).unwrap();
        assert_eq!(s.metrics.display_row(), "74.6% 96.8% 85.7% 0.39");
        let s = compute_metrics(from_counts(52, 11, 55, 8)).unwrap();
        assert_eq!(s.metrics.display_row(), "82.5% 87.3% 84.9% 0.48");
        assert_eq!(s.counts, ConfusionCounts { tp: 52, fn_: 11, tn: 55, fp: 8 });
    }

    #[test]
    fn perfect_predictions() {
        let s = compute_metrics(from_counts(30, 0, 70, 0)).unwrap();
        assert_eq!(s.metrics.tpr, Some(1.0));
        assert_eq!(s.metrics.tnr, Some(1.0));
        assert_eq!(s.metrics.accuracy, 1.0);
        assert_eq!(s.metrics.pp, 0.3);
        assert_eq!(roc_point(&s.metrics), Some(RocPoint { fpr: 0.0, tpr: 1.0 }));
    }

    #[test]
    fn undefined_rates_are_marked() {
        let s = compute_metrics(from_counts(3, 1, 0, 0)).unwrap();
        assert_eq!(s.metrics.tnr, None);
        assert_eq!(roc_point(&s.metrics), None);
        assert!(s.metrics.display_row().starts_with("75.0% n/a"));
        assert_eq!(compute_metrics(Vec::new()), Err(EvalError::Empty));
        assert_eq!(compute_metrics(vec![(None, Label::NonEoE)]), Err(EvalError::Empty));
    }

    #[test]
    fn indeterminate_excluded() {
        let mut pairs = from_counts(2, 0, 2, 0);
        pairs.push((None, Label::ActiveEoE));
        let s = compute_metrics(pairs).unwrap();
        assert_eq!(s.indeterminate, 1);
        assert_eq!(s.counts.total(), 4);
    }

    #[test]
    fn roc_for_first_row() {
        let m = compute_metrics(from_counts(47, 16, 61, 2)).unwrap().metrics;
        let p = roc_point(&m).unwrap();
        assert!((p.fpr - 0.032).abs() < 5e-4);
        assert!((p.tpr - 0.746).abs() < 5e-4);
    }

    #[test]
    fn coin_classifier_near_diagonal() {
        let truth = random_labels(1000, 1);
        let coin = random_labels(1000, 2);
        let m = compute_metrics(coin.into_iter().map(Some).zip(truth)).unwrap().metrics;
        let p = roc_point(&m).unwrap();
        // distance to the diagonal tpr = fpr
        assert!((p.tpr - p.fpr).abs() / 2f64.sqrt() < 0.1);
    }

    #[test]
    fn histogram_examples() {
        let h = probability_histogram(&[0.5; 7], Label::NonEoE, 20).unwrap();
        assert_eq!(h.counts[10], 7);
        assert_eq!(h.total(), 7);
        assert_eq!(h.bin_edges.len(), 21);
        let h = probability_histogram(&[0.0, 1.0, 1.0], Label::ActiveEoE, 20).unwrap();
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[19], 2);
        assert_eq!(h.counts[1..19].iter().sum::<u64>(), 0);
        assert!(probability_histogram(&[1.2], Label::ActiveEoE, 20).is_err());
        assert!(probability_histogram(&[0.2], Label::ActiveEoE, 0).is_err());
    }

    #[test]
    fn histogram_matches_direct_binning() {
        let mut rng = seeds::rng(77);
        let probs: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let h = probability_histogram(&probs, Label::ActiveEoE, 20).unwrap();
        for b in 0..20 {
            let (lo, hi) = (b as f64 / 20.0, (b + 1) as f64 / 20.0);
            let direct = probs.iter().filter(|&&p| p >= lo && (p < hi || (b == 19 && p <= hi))).count();
            assert_eq!(h.counts[b] as usize, direct, "bin {b}");
        }
    }

    #[test]
    fn band_mass_examples() {
        assert_eq!(central_band_mass(&[0.5, 0.5], DEFAULT_BAND).unwrap(), 1.0);
        assert_eq!(central_band_mass(&[0.1, 0.9], DEFAULT_BAND).unwrap(), 0.0);
        assert_eq!(central_band_mass(&[0.4, 0.6, 0.39], DEFAULT_BAND).unwrap(), 2.0 / 3.0);
        assert!(central_band_mass(&[], DEFAULT_BAND).is_err());
    }

    #[test]
    fn random_labels_deterministic_and_label_blind() {
        assert_eq!(random_labels(50, 3), random_labels(50, 3));
        assert_ne!(random_labels(50, 3), random_labels(50, 4));
        let a: Vec<(u32, Label)> = (0..40).map(|i| (i, Label::ActiveEoE)).collect();
        let b: Vec<(u32, Label)> = (0..40).map(|i| (i, Label::NonEoE)).collect();
        assert_eq!(random_label_control(&a, 9), random_label_control(&b, 9));
        for n in [0, 1, 2, 7, 10_000] {
            let pos = random_labels(n, 5).iter().filter(|l| l.is_positive()).count();
            assert!(pos == n / 2 || pos == n.div_ceil(2), "{n}: {pos}");
        }
    }

    #[test]
    fn auc_basics() {
        let s = [(0.9, Label::ActiveEoE), (0.1, Label::NonEoE), (0.5, Label::ActiveEoE), (0.5, Label::NonEoE)];
        // pairs: (0.9>0.1),(0.9>0.5),(0.5>0.1),(0.5=0.5) -> 3.5/4
        assert_eq!(separation_auc(&s), Some(0.875));
        assert_eq!(separation_auc(&s[..1]), None);
    }

    #[test]
    fn orphans_become_errors() {
        let rec = |id: &str, label| PredictionRecord {
            image_id: id.into(),
            strategy: "patch-224".into(),
            label,
            votes_active: 1,
            votes_total: 1,
            patch_probs: vec![PatchProb { patch_index: 0, probability: 0.8 }],
        };
        let truth: BTreeMap<String, Label> = [("a".to_string(), Label::ActiveEoE)].into();
        let r = evaluate_records(
            "patch-224",
            true,
            &[rec("a", Verdict::ActiveEoE), rec("zzz", Verdict::NonEoE)],
            &truth,
        );
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].image_id, "zzz");
        assert_eq!(r.image.unwrap().counts.tp, 1);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = roc_svg(&[("patch-224".into(), RocPoint { fpr: 0.2, tpr: 0.8 })]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("patch-224"));
        let h = probability_histogram(&[0.1, 0.2], Label::ActiveEoE, 10).unwrap();
        let svg = histogram_svg("t", &[("a", &h), ("b", &h)]);
        assert_eq!(svg.matches("<rect").count(), 20);
    }
}
