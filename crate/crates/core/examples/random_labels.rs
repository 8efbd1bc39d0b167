//! Random-label control: a model trained on shuffled patch labels should
//! produce probabilities piled up around 0.5, while the same model trained
//! on true labels spreads its probabilities towards 0 and 1.
//!
//! ```text
//! cargo run --release --example random_labels -- [train/class] [val/class] [size] [seed] [lr] [l2] [epochs]
//! ```

use std::env;

use patchscope::augment::AugmentSpec;
use patchscope::cli::patch_probabilities;
use patchscope::dataset::{self, LabelRule, PatternKind, SplitSpec, SynthGenerator, SynthPattern};
use patchscope::evaluation::{self, central_band_mass, DEFAULT_BAND};
use patchscope::pipeline::{self, StrategyConfig, StrategyKind};
use patchscope::seeds;
use patchscope::TrainConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train: usize = arg(1, 60);
    let val: usize = arg(2, 30);
    let size: u32 = arg(3, 512);
    let seed: u64 = arg(4, 3);
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        seed,
        learning_rate: arg(5, defaults.learning_rate),
        l2: arg(6, defaults.l2),
        epochs: arg(7, defaults.epochs),
        ..defaults
    };
    let workers = patchscope::cli::resolve_workers(0);

    let n = 2 * (train + val);
    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::GlobalDiffuse), LabelRule::Alternate, (size, size), seed)?;
    let manifest = gen.manifest(n);
    let source = gen.source(n);
    let split = dataset::balanced_split(
        &manifest,
        &SplitSpec {
            train_per_class: train,
            val_per_class: val,
            per_resolution_counts: Default::default(),
            seed,
        },
    )?;
    let truth = dataset::truth_map(&split.validation);
    let strategy = StrategyConfig::new(StrategyKind::PATCH_224);
    let aug = AugmentSpec::identity();

    let real = pipeline::train_for_strategy(&split.train, &source, &strategy, &cfg, &aug, workers, None)?;
    let outcomes = pipeline::run_experiment(&real.outcome.model, &split.validation, &source, &strategy, workers)?;
    let (true_probs, parents) = patch_probabilities(&outcomes, &truth);

    let control_seed = seeds::derive(seed, "control");
    let relabel = |labels: &[patchscope::Label]| evaluation::random_labels(labels.len(), control_seed);
    let control = pipeline::train_for_strategy(&split.train, &source, &strategy, &cfg, &aug, workers, Some(&relabel))?;
    let outcomes = pipeline::run_experiment(&control.outcome.model, &split.validation, &source, &strategy, workers)?;
    let (control_probs, _) = patch_probabilities(&outcomes, &truth);
    let report = evaluation::control_report(&control_probs, &parents, seeds::derive(control_seed, "validation"));

    let n_val = control_probs.len() as f64;
    let sigma = (0.25 / n_val).sqrt();
    println!("validation patches: {}", control_probs.len());
    println!(
        "control accuracy vs control labels: {:.4} (0.5 +/- {:.4})",
        report.accuracy_vs_control_labels.unwrap_or(f64::NAN),
        3.0 * sigma
    );
    println!("control PP: {:.3}", report.patch.as_ref().map_or(f64::NAN, |m| m.metrics.pp));
    println!(
        "central band mass: true labels {:.3}, random labels {:.3}",
        central_band_mass(&true_probs, DEFAULT_BAND)?,
        central_band_mass(&control_probs, DEFAULT_BAND)?
    );
    let (lo, hi) = control_probs.iter().fold((1.0f64, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
    println!("control probability range: [{lo:.3}, {hi:.3}]");
    Ok(())
}
