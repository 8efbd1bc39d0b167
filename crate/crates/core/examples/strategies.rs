//! Whole-image classification with the four input strategies: two full
//! downscales and two patch crops with majority voting. Each strategy gets
//! its own model, trained on a small synthetic set.
//!
//! ```text
//! cargo run --release --example strategies -- [pattern]
//! ```

use std::env;

use patchscope::augment::AugmentSpec;
use patchscope::dataset::{self, LabelRule, PatternKind, SplitSpec, SynthGenerator, SynthPattern};
use patchscope::evaluation;
use patchscope::pipeline::{self, StrategyConfig, StrategyKind};
use patchscope::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: PatternKind = env::args().nth(1).unwrap_or_else(|| "global".into()).parse()?;
    let gen = SynthGenerator::new(SynthPattern::preset(kind), LabelRule::Alternate, (1024, 1024), 12)?;
    let n = 80;
    let source = gen.source(n);
    let split = dataset::balanced_split(
        &gen.manifest(n),
        &SplitSpec {
            train_per_class: 25,
            val_per_class: 15,
            per_resolution_counts: Default::default(),
            seed: 12,
        },
    )?;
    let truth = dataset::truth_map(&split.validation);
    let cfg = TrainConfig {
        epochs: 100,
        seed: 12,
        ..TrainConfig::default()
    };
    let workers = patchscope::cli::resolve_workers(0);

    println!("{:<10} {:>7}  {:<6} {:<6} {:<6} PP", "strategy", "inputs", "TPR", "TNR", "Acc");
    for kind in StrategyKind::ALL {
        let strategy = StrategyConfig::new(kind);
        let trained = pipeline::train_for_strategy(&split.train, &source, &strategy, &cfg, &AugmentSpec::identity(), workers, None)?;
        let outcomes = pipeline::run_experiment(&trained.outcome.model, &split.validation, &source, &strategy, workers)?;
        let report = evaluation::evaluate_outcomes(&strategy, &outcomes, &truth);
        let row = report.image.map_or_else(|| "no determinate predictions".to_string(), |m| m.display);
        println!("{:<10} {:>7}  {row}", strategy.name(), trained.samples);
    }

    // Votes behind one validation image under the 224px patch strategy.
    let strategy = StrategyConfig::new(StrategyKind::PATCH_224);
    let trained = pipeline::train_for_strategy(&split.train, &source, &strategy, &cfg, &AugmentSpec::identity(), workers, None)?;
    let outcomes = pipeline::run_experiment(&trained.outcome.model, &split.validation[..1], &source, &strategy, workers)?;
    if let Some(p) = outcomes[0].prediction() {
        println!(
            "{}: {} of {} patches voted ActiveEoE -> {} (truth {})",
            p.image_id, p.votes_active, p.votes_total, p.label, truth[&p.image_id]
        );
    }
    Ok(())
}
