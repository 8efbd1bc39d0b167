//! Training-time augmentation: draw a few random transforms of one patch
//! and write them side by side, plus the parameters each draw used.
//!
//! ```text
//! cargo run --release --example augment -- [out-dir]
//! ```

use std::env;
use std::path::PathBuf;

use patchscope::augment::{apply, AugmentParams, AugmentSpec};
use patchscope::dataset::{LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::{crop, RasterImage, Rect};
use patchscope::seeds;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(env::args().nth(1).unwrap_or_else(|| "augment-out".into()));
    std::fs::create_dir_all(&out)?;

    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::GlobalDiffuse), LabelRule::AllPositive, (512, 512), 4)?;
    let patch = crop(&gen.render(0).image, &Rect::new(144, 144, 224, 224))?;

    let spec = AugmentSpec {
        rotation_jitter: 10.0,
        ..AugmentSpec::default()
    };
    let mut rng = seeds::rng(42);
    let mut tiles = vec![patch.clone()];
    for i in 0..5 {
        let p = AugmentParams::sample(&spec, patch.width(), &mut rng);
        println!("draw {i}: {p:?}");
        tiles.push(apply(&patch, &p));
    }

    let side = patch.width();
    let strip = RasterImage::from_fn(side * tiles.len() as u32, side, |x, y| tiles[(x / side) as usize].pixel(x % side, y))?;
    strip.save_png(out.join("augment-strip.png"))?;
    println!("wrote {}", out.join("augment-strip.png").display());
    Ok(())
}
