//! Local versus global evidence on synthetic biopsies.
//!
//! Trains a patch model on images whose positives carry either a compact
//! cluster of marks or marks spread over the whole tissue, then reports
//! whole-image accuracy, patch accuracy and how well the per-image fraction
//! of active-voted patches separates the classes.
//!
//! ```text
//! cargo run --release --example locality -- [pattern] [train/class] [val/class] [size] [seed] [lr] [epochs] [l2]
//! ```

use std::env;

use patchscope::augment::AugmentSpec;
use patchscope::dataset::{self, LabelRule, PatternKind, SplitSpec, SynthGenerator, SynthPattern};
use patchscope::evaluation::{self, separation_auc};
use patchscope::imaging::tissue_mask;
use patchscope::pipeline::{self, StrategyConfig, StrategyKind};
use patchscope::tiling;
use patchscope::TrainConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: PatternKind = arg(1, "local".to_string()).parse()?;
    let train: usize = arg(2, 200);
    let val: usize = arg(3, 100);
    let size: u32 = arg(4, 1024);
    let seed: u64 = arg(5, 1);
    let workers = patchscope::cli::resolve_workers(0);

    let n = 2 * (train + val);
    let gen = SynthGenerator::new(SynthPattern::preset(kind), LabelRule::Alternate, (size, size), seed)?;
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

    if kind == PatternKind::LocalCluster {
        let mut worst: f64 = 0.0;
        for i in (0..n).step_by(2).take(20) {
            let s = gen.render(i);
            let mask = tissue_mask(&s.image, 240);
            let rects = tiling::tile(size, size, 224)?;
            let kept = tiling::filter_patches(&rects, &mask, 0.10, &s.entry.image_id, None)?;
            let c = s.truth.cluster.expect("positives have a cluster");
            let hits = kept.iter().filter(|p| rect_meets_disk(&p.rect, c.cx, c.cy, c.diameter / 2.0)).count();
            worst = worst.max(hits as f64 / kept.len() as f64);
        }
        println!("largest fraction of tissue patches meeting the cluster: {:.3}", worst);
    }

    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        seed,
        learning_rate: arg(6, defaults.learning_rate),
        epochs: arg(7, defaults.epochs),
        l2: arg(8, defaults.l2),
        ..defaults
    };
    for kind in [StrategyKind::PATCH_448, StrategyKind::PATCH_224] {
        let strategy = StrategyConfig::new(kind);
        let trained = pipeline::train_for_strategy(&split.train, &source, &strategy, &cfg, &AugmentSpec::identity(), workers, None)?;
        let outcomes = pipeline::run_experiment(&trained.outcome.model, &split.validation, &source, &strategy, workers)?;
        let report = evaluation::evaluate_outcomes(&strategy, &outcomes, &truth);
        let vote_fraction: Vec<(f64, _)> = outcomes
            .iter()
            .filter_map(|o| o.prediction())
            .map(|p| (p.active_fraction(), truth[&p.image_id]))
            .collect();
        println!(
            "{:<10} inputs {:>6}  image {}  patch {}  vote-fraction AUC {:.3}",
            strategy.name(),
            trained.samples,
            report.image.as_ref().map_or("n/a".into(), |m| m.display.clone()),
            report.patch.as_ref().map_or("n/a".into(), |m| m.display.clone()),
            separation_auc(&vote_fraction).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

fn rect_meets_disk(r: &patchscope::Rect, cx: f64, cy: f64, radius: f64) -> bool {
    let nx = cx.clamp(f64::from(r.x), f64::from(r.x + r.w));
    let ny = cy.clamp(f64::from(r.y), f64::from(r.y + r.h));
    (nx - cx).powi(2) + (ny - cy).powi(2) <= radius * radius
}
