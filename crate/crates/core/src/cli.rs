//! Experiment configuration and the `synth`, `train`, `run` and `eval`
//! commands.
//!
//! Command functions return the process exit code: 0 when the emitted
//! report has no error entries, 1 otherwise. Hard failures (bad flags,
//! unreadable config, unwritable output) surface as [`CliError`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentSpec;
use crate::classifier::{ClassifierError, ToyClassifier, TrainConfig};
use crate::dataset::{
    self, DatasetError, LabelRule, ManifestEntry, PatternKind, SplitSpec, SynthGenerator, SynthPattern,
};
use crate::evaluation::{self, ErrorEntry, EvalReport, StrategyReport};
use crate::pipeline::{
    self, DiskSource, ImageOutcome, ImageSource, PipelineError, PredictionRecord, StrategyConfig, StrategyKind,
};
use crate::seeds::{self, Stream};
use crate::Label;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("predictions: {0}")]
    Predictions(String),
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("image: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Control runs available to `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    #[default]
    None,
    /// Retrain on uniformly random patch labels and evaluate on the same
    /// validation patches.
    RandomLabels,
}

/// Everything `run` needs. `master_seed` overrides the seeds inside
/// `train` and `split`; each consumer then draws from its own named
/// sub-stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub strategies: Vec<StrategyKind>,
    pub vote_threshold: f64,
    pub coverage_threshold: f64,
    pub bg_threshold: u8,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub master_seed: u64,
    pub control: ControlMode,
    pub plots: bool,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    pub split: SplitSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = StrategyConfig::default();
        Self {
            manifest: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("out"),
            strategies: StrategyKind::ALL.to_vec(),
            vote_threshold: base.vote_threshold,
            coverage_threshold: base.coverage_threshold,
            bg_threshold: base.bg_threshold,
            workers: 0,
            master_seed: 0,
            control: ControlMode::None,
            plots: false,
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
            split: SplitSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serialisable")
    }

    pub fn strategy_configs(&self) -> Vec<StrategyConfig> {
        self.strategies
            .iter()
            .map(|&kind| StrategyConfig {
                vote_threshold: self.vote_threshold,
                coverage_threshold: self.coverage_threshold,
                bg_threshold: self.bg_threshold,
                ..StrategyConfig::new(kind)
            })
            .collect()
    }

    pub fn resolved_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.master_seed,
            ..self.train.clone()
        }
    }

    pub fn resolved_split(&self) -> SplitSpec {
        SplitSpec {
            seed: self.master_seed,
            ..self.split.clone()
        }
    }

    pub fn effective_workers(&self) -> usize {
        resolve_workers(self.workers)
    }

    /// Structural checks; `check_paths` additionally requires the manifest
    /// to exist.
    pub fn validate(&self, check_paths: bool) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(CliError::Config("at least one strategy is required".into()));
        }
        for s in self.strategy_configs() {
            s.validate()?;
        }
        self.train.validate()?;
        if self.train.epochs == 0 {
            return Err(CliError::Config("train.epochs must be at least 1".into()));
        }
        self.augment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if check_paths && !self.manifest.is_file() {
            return Err(CliError::Config(format!("manifest {} does not exist", self.manifest.display())));
        }
        Ok(())
    }
}

pub fn resolve_workers(workers: usize) -> usize {
    if workers > 0 {
        workers
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

#[derive(Debug, Parser)]
#[command(name = "patchscope", version, about = "Multi-scale patch classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic image set with a manifest and ground truth.
    Synth(SynthArgs),
    /// Train one strategy's model on a whole manifest and save it.
    Train(TrainArgs),
    /// Split, train and evaluate every configured strategy.
    Run(RunArgs),
    /// Recompute metrics from stored predictions.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "global")]
    pub pattern: String,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value = "1024x1024")]
    pub dims: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub feature_size: Option<u32>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub cluster_diameter: Option<u32>,
    /// alternate, positive or negative.
    #[arg(long, default_value = "alternate")]
    pub labels: String,
    #[arg(long, env = "PATCHSCOPE_THREADS", default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML or JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated list such as `full-1000,patch-448`.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<StrategyKind>>,
    #[arg(long, env = "PATCHSCOPE_THREADS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub control: Option<ControlMode>,
    /// Disable training-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub plots: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = &self.strategies {
            cfg.strategies = s.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if let Some(c) = self.control {
            cfg.control = c;
        }
        if self.no_augment {
            cfg.augment = AugmentSpec::identity();
        }
        cfg.plots |= self.plots;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "patch-224")]
    pub strategy: StrategyKind,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "PATCHSCOPE_THREADS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// JSON-lines prediction records.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the report; printed only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments and run; used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(exit_code(execute(cli)))
}

/// Parse an argument vector (including the program name) and run.
pub fn run_args<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(cli)
}

fn exit_code(result: Result<i32>) -> u8 {
    match result {
        Ok(code) => code.clamp(0, 255) as u8,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Run(a) => {
            let cfg = a.resolve()?;
            Ok(cmd_run(&cfg)?.exit_code())
        }
        Command::Eval(a) => cmd_eval(&a),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<i32> {
    let kind: PatternKind = args.pattern.parse()?;
    let dims = dataset::parse_dims(&args.dims)?;
    let rule: LabelRule = args.labels.parse()?;
    let mut pattern = SynthPattern::preset(kind);
    if let Some(fs) = args.feature_size {
        pattern.feature_size = fs;
    }
    if let Some(d) = args.density {
        pattern.feature_density = d;
    }
    if let Some(c) = args.cluster_diameter {
        pattern.cluster_diameter = c;
    }
    let gen = SynthGenerator::new(pattern, rule, dims, args.seed)?;
    create_dir(&args.out)?;
    let pool = pipeline::worker_pool(resolve_workers(args.workers))?;
    let written: Vec<Result<()>> = pool.install(|| {
        (0..args.n)
            .into_par_iter()
            .map(|i| {
                let s = gen.render(i);
                let png = args.out.join(&s.entry.path);
                s.image.save_png(&png).map_err(|e| CliError::Image(e.to_string()))?;
                let truth = args.out.join(format!("{}.truth.json", s.entry.image_id));
                let json = serde_json::to_string_pretty(&s.truth).expect("truth is serialisable");
                write_text(&truth, &json)
            })
            .collect()
    });
    written.into_iter().collect::<Result<()>>()?;
    let manifest = gen.manifest(args.n);
    let path = args.out.join("manifest.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    dataset::write_manifest(BufWriter::new(file), &manifest)?;
    let positives = manifest.iter().filter(|e| e.label.is_positive()).count();
    println!(
        "synth: {} images ({} positive, {} negative), pattern {}, {}x{}, written to {}",
        args.n,
        positives,
        args.n - positives,
        kind,
        dims.0,
        dims.1,
        args.out.display()
    );
    Ok(0)
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(dataset::read_manifest(file)?)
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &args.manifest {
        cfg.manifest = m.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.learning_rate = lr;
    }
    if args.no_augment {
        cfg.augment = AugmentSpec::identity();
    }
    cfg.strategies = vec![args.strategy];
    cfg.validate(true)?;

    let entries = load_manifest(&cfg.manifest)?;
    let source = DiskSource::new(manifest_root(&cfg.manifest));
    let strategy = &cfg.strategy_configs()[0];
    let trained = pipeline::train_for_strategy(
        &entries,
        &source,
        strategy,
        &cfg.resolved_train(),
        &cfg.augment,
        cfg.effective_workers(),
        None,
    )?;
    trained.outcome.model.save(&args.out)?;
    let failures: Vec<_> = trained.skipped.iter().filter(|(_, m)| m != pipeline::NO_WINDOWS).collect();
    for (id, msg) in &failures {
        eprintln!("error: {id}: {msg}");
    }
    println!(
        "train: {} on {} inputs from {} images, final loss {:.4}, saved {}",
        strategy.name(),
        trained.samples,
        entries.len() - trained.skipped.len(),
        trained.outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(i32::from(!failures.is_empty()))
}

/// Result of [`cmd_run`]: the report as written plus the output paths.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub predictions_path: PathBuf,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.report.has_errors())
    }
}

/// Split, then train and evaluate every strategy, writing
/// `report.json`, `predictions.jsonl`, model checkpoints and optional SVG
/// plots to the output directory. A failed split still writes a report
/// holding the error.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate(true)?;
    let entries = load_manifest(&cfg.manifest)?;
    let source = DiskSource::new(manifest_root(&cfg.manifest));
    create_dir(&cfg.output_dir)?;
    let report = run_experiment_report(cfg, &entries, &source, Some(&cfg.output_dir.join("models")))?;
    let summary = write_run_outputs(cfg, report)?;
    for s in &summary.report.strategies {
        match &s.image {
            Some(m) => println!("{:<12} {}", s.strategy, m.display),
            None => println!("{:<12} no determinate predictions", s.strategy),
        }
    }
    for e in summary.report.errors.iter().chain(summary.report.strategies.iter().flat_map(|s| &s.errors)) {
        eprintln!("error: {}: {}", e.image_id, e.message);
    }
    Ok(summary)
}

fn write_run_outputs(cfg: &ExperimentConfig, report: EvalReport) -> Result<RunSummary> {
    let out = &cfg.output_dir;
    let report_path = out.join("report.json");
    write_text(&report_path, &report.to_json())?;
    let predictions_path = out.join("predictions.jsonl");
    let records: Vec<PredictionRecord> = report.strategies.iter().flat_map(|s| s.predictions.clone()).collect();
    let mut buf = Vec::new();
    pipeline::write_predictions(&mut buf, &records)?;
    fs::write(&predictions_path, buf).map_err(io_err(&predictions_path))?;
    if cfg.plots {
        write_plots(out, &report)?;
    }
    Ok(RunSummary {
        report,
        report_path,
        predictions_path,
    })
}

fn write_plots(out: &Path, report: &EvalReport) -> Result<()> {
    let points: Vec<(String, evaluation::RocPoint)> = report
        .strategies
        .iter()
        .filter_map(|s| s.image.as_ref().and_then(|m| m.roc).map(|p| (s.strategy.clone(), p)))
        .collect();
    write_text(&out.join("roc.svg"), &evaluation::roc_svg(&points))?;
    for s in &report.strategies {
        let Some(dist) = &s.distribution else { continue };
        let mut panels = vec![("ActiveEoE", &dist.positive), ("NonEoE", &dist.negative)];
        if let Some(c) = &s.control {
            panels.push(("ActiveEoE, random labels", &c.distribution.positive));
            panels.push(("NonEoE, random labels", &c.distribution.negative));
        }
        let title = format!("{}: patch probability", s.strategy);
        write_text(&out.join(format!("hist-{}.svg", s.strategy)), &evaluation::histogram_svg(&title, &panels))?;
    }
    Ok(())
}

/// Split `entries`, then train and evaluate each configured strategy on
/// images from `source`. Checkpoints go to `models_dir` when given.
pub fn run_experiment_report(
    cfg: &ExperimentConfig,
    entries: &[ManifestEntry],
    source: &dyn ImageSource,
    models_dir: Option<&Path>,
) -> Result<EvalReport> {
    cfg.validate(false)?;
    let mut report = EvalReport::default();
    let split = match dataset::balanced_split(entries, &cfg.resolved_split()) {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(ErrorEntry {
                image_id: String::new(),
                message: e.to_string(),
            });
            return Ok(report);
        }
    };
    let truth = dataset::truth_map(&split.validation);
    let workers = cfg.effective_workers();
    let train_cfg = cfg.resolved_train();
    if let Some(dir) = models_dir {
        create_dir(dir)?;
    }

    for strategy in cfg.strategy_configs() {
        let trained = pipeline::train_for_strategy(&split.train, source, &strategy, &train_cfg, &cfg.augment, workers, None)?;
        let model = trained.outcome.model;
        if let Some(dir) = models_dir {
            model.save(dir.join(format!("{}.json", strategy.name())))?;
        }
        let outcomes = pipeline::run_experiment(&model, &split.validation, source, &strategy, workers)?;
        let mut sr = evaluation::evaluate_outcomes(&strategy, &outcomes, &truth);
        push_training_failures(&mut sr, &trained.skipped);

        if cfg.control == ControlMode::RandomLabels {
            let control_seed = seeds::stream_seed(cfg.master_seed, Stream::Control);
            let train_seed = seeds::derive(control_seed, "train");
            let relabel = move |labels: &[Label]| evaluation::random_labels(labels.len(), train_seed);
            let control =
                pipeline::train_for_strategy(&split.train, source, &strategy, &train_cfg, &cfg.augment, workers, Some(&relabel))?;
            let outcomes = pipeline::run_experiment(&control.outcome.model, &split.validation, source, &strategy, workers)?;
            let (probs, parents) = patch_probabilities(&outcomes, &truth);
            sr.control = Some(evaluation::control_report(&probs, &parents, seeds::derive(control_seed, "validation")));
        }
        report.strategies.push(sr);
    }
    Ok(report)
}

fn push_training_failures(sr: &mut StrategyReport, skipped: &[(String, String)]) {
    for (id, msg) in skipped {
        if msg != pipeline::NO_WINDOWS {
            sr.errors.push(ErrorEntry {
                image_id: id.clone(),
                message: format!("training: {msg}"),
            });
        }
    }
}

/// Patch probabilities in outcome order with each patch's parent label.
pub fn patch_probabilities(outcomes: &[ImageOutcome], truth: &BTreeMap<String, Label>) -> (Vec<f64>, Vec<Label>) {
    let mut probs = Vec::new();
    let mut parents = Vec::new();
    for p in outcomes.iter().filter_map(ImageOutcome::prediction) {
        if let Some(&t) = truth.get(&p.image_id) {
            for pp in &p.patch_probs {
                probs.push(pp.probability);
                parents.push(t);
            }
        }
    }
    (probs, parents)
}

/// Recompute metrics from stored predictions; prints one row per strategy.
pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let text = read_text(&args.predictions)?;
    let records = pipeline::read_predictions(&text).map_err(CliError::Predictions)?;
    if records.is_empty() {
        return Err(CliError::EmptyPredictions);
    }
    let truth = dataset::truth_map(&load_manifest(&args.manifest)?);
    let report = evaluate_predictions(&records, &truth);

    println!("{:<12} {:>6} {:>6} {:>6} {:>5}  indeterminate", "strategy", "TPR", "TNR", "ACC", "PP");
    for s in &report.strategies {
        let row = s.image.as_ref().map_or_else(|| "n/a".to_string(), |m| m.display.clone());
        println!("{:<12} {row}  {}", s.strategy, s.indeterminate.len());
    }
    let orphans: Vec<&ErrorEntry> = report.strategies.iter().flat_map(|s| &s.errors).collect();
    if !orphans.is_empty() {
        let ids: Vec<&str> = orphans.iter().map(|e| e.image_id.as_str()).collect();
        eprintln!("error: predictions without ground truth: {}", ids.join(", "));
    }
    match &args.out {
        Some(path) => write_text(path, &report.to_json())?,
        None => println!("{}", report.to_json()),
    }
    Ok(i32::from(report.has_errors()))
}

/// Group records by strategy (in order of first appearance) and evaluate.
pub fn evaluate_predictions(records: &[PredictionRecord], truth: &BTreeMap<String, Label>) -> EvalReport {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(r.strategy.as_str()) {
            order.push(&r.strategy);
        }
        groups.entry(&r.strategy).or_default().push(r.clone());
    }
    let mut report = EvalReport::default();
    for name in order {
        let group = &groups[name];
        let patch_level = name
            .parse::<StrategyKind>()
            .map_or_else(|_| group.iter().any(|r| r.patch_probs.len() > 1), |k| k.is_patch());
        report.strategies.push(evaluation::evaluate_records(name, patch_level, group, truth));
    }
    report
}

/// Load a checkpoint and classify a manifest with one strategy.
pub fn predict_manifest(
    model_path: &Path,
    manifest: &Path,
    strategy: &StrategyConfig,
    workers: usize,
) -> Result<Vec<ImageOutcome>> {
    let model = ToyClassifier::load(model_path)?;
    let entries = load_manifest(manifest)?;
    let source = DiskSource::new(manifest_root(manifest));
    Ok(pipeline::run_experiment(&model, &entries, &source, strategy, workers)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let mut cfg = ExperimentConfig {
            strategies: vec![StrategyKind::PATCH_448, StrategyKind::FULL_224],
            control: ControlMode::RandomLabels,
            master_seed: 42,
            ..ExperimentConfig::default()
        };
        cfg.split.per_resolution_counts.clear();
        let toml = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&toml).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let full = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&full.to_toml().unwrap()).unwrap(), full);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("manifest = \"m.csv\"\nstrategies = [\"patch-224\"]\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.strategies, vec![StrategyKind::PATCH_224]);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn empty_strategies_rejected() {
        let cfg = ExperimentConfig {
            strategies: vec![],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate(false).is_err());
    }

    #[test]
    fn missing_manifest_rejected() {
        let cfg = ExperimentConfig {
            manifest: PathBuf::from("/definitely/not/here.csv"),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate(false).is_ok());
        assert!(cfg.validate(true).is_err());
    }

    #[test]
    fn master_seed_overrides_section_seeds() {
        let cfg = ExperimentConfig {
            master_seed: 9,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.resolved_train().seed, 9);
        assert_eq!(cfg.resolved_split().seed, 9);
    }

    #[test]
    fn run_flags_override_config() {
        let cli = Cli::try_parse_from(["patchscope", "run", "--strategies", "full-1000,patch-448", "--seed", "3", "--no-augment"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.strategies, vec![StrategyKind::FULL_1000, StrategyKind::PATCH_448]);
        assert_eq!(cfg.master_seed, 3);
        assert!(cfg.augment.is_identity());
    }
}
