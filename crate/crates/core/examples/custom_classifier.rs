//! Plug a hand-written patch classifier into the pipeline. Any type that
//! implements `PatchClassifier` can be voted over with the same tiling,
//! coverage filter and aggregation as the trained model.
//!
//! ```text
//! cargo run --release --example custom_classifier
//! ```

use patchscope::classifier::{self, PatchClassifier};
use patchscope::dataset::{LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::{tissue_mask, RasterImage};
use patchscope::pipeline::{classify_whole_image, StrategyConfig, StrategyKind};

/// Scores a patch by the share of very dark green-channel pixels, the
/// colour of the planted marks.
struct DarkMarkDetector {
    input: u32,
    cutoff: u8,
}

impl PatchClassifier for DarkMarkDetector {
    fn input_size(&self) -> u32 {
        self.input
    }

    fn predict_proba(&self, img: &RasterImage) -> Result<f64, classifier::ClassifierError> {
        let dark = img.as_raw().chunks_exact(3).filter(|p| p[1] < self.cutoff).count();
        let share = dark as f64 / f64::from(img.width() * img.height());
        Ok((share * 400.0).min(1.0))
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::HalfTissue), LabelRule::Alternate, (1024, 1024), 21)?;
    let model = DarkMarkDetector { input: 224, cutoff: 48 };
    let strategy = StrategyConfig::new(StrategyKind::PATCH_224);
    for i in 0..6 {
        let s = gen.render(i);
        let mask = tissue_mask(&s.image, strategy.bg_threshold);
        let p = classify_whole_image(&model, &s.entry.image_id, &s.image, &mask, &strategy)?;
        println!(
            "{}  truth {:<9}  {:>2}/{:<2} patches active -> {}",
            p.image_id,
            s.entry.label.to_string(),
            p.votes_active,
            p.votes_total,
            p.label
        );
    }
    Ok(())
}
