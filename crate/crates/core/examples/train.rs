//! Train the histogram-feature logistic model on synthetic 224px patches,
//! print the loss curve, save a checkpoint and check that the reloaded
//! model predicts identically.
//!
//! ```text
//! cargo run --release --example train -- [epochs] [checkpoint]
//! ```

use std::env;
use std::path::PathBuf;

use patchscope::augment::AugmentSpec;
use patchscope::classifier::{self, PatchClassifier};
use patchscope::dataset::{LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::tissue_mask;
use patchscope::pipeline::{prepare_inputs, StrategyConfig, StrategyKind};
use patchscope::{ToyClassifier, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: u32 = env::args().nth(1).map_or(Ok(40), |s| s.parse())?;
    let checkpoint = PathBuf::from(env::args().nth(2).unwrap_or_else(|| "toy-model.json".into()));

    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::GlobalDiffuse), LabelRule::Alternate, (512, 512), 8)?;
    let strategy = StrategyConfig::new(StrategyKind::PATCH_224);
    let mut data = Vec::new();
    for i in 0..40 {
        let s = gen.render(i);
        let mask = tissue_mask(&s.image, strategy.bg_threshold);
        for input in prepare_inputs(&s.image, &mask, &strategy)? {
            data.push((input.image, s.entry.label));
        }
    }
    println!("{} training patches from 40 images", data.len());

    let cfg = TrainConfig {
        epochs,
        seed: 8,
        ..TrainConfig::default()
    };
    // Right-angle turns, flips and shifts; no rescaling.
    let spec = AugmentSpec {
        scale: (1.0, 1.0),
        ..AugmentSpec::default()
    };
    let outcome = classifier::train_source(&ToyClassifier::new(224), &data[..], &cfg, &spec)?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate().step_by((epochs as usize / 10).max(1)) {
        println!("epoch {:>4}  loss {loss:.4}", epoch + 1);
    }

    let model = outcome.model;
    let correct = data.iter().filter(|(img, label)| {
        let p = model.predict_proba(img).expect("224px input");
        (p >= 0.5) == label.is_positive()
    });
    println!("training accuracy {:.3}", correct.count() as f64 / data.len() as f64);

    model.save(&checkpoint)?;
    let reloaded = ToyClassifier::load(&checkpoint)?;
    let same = data.iter().all(|(img, _)| model.predict_proba(img).ok() == reloaded.predict_proba(img).ok());
    println!("saved {} (reload predicts identically: {same})", checkpoint.display());
    Ok(())
}
