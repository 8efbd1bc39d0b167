//! Bicubic resampling: bring a whole image and one 448px window down to
//! the classifier input sizes and write the results as PNG.
//!
//! ```text
//! cargo run --release --example resample -- [out-dir]
//! ```

use std::env;
use std::path::PathBuf;

use patchscope::dataset::{LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::{crop, downscale_bicubic, Rect};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(env::args().nth(1).unwrap_or_else(|| "resample-out".into()));
    std::fs::create_dir_all(&out)?;

    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::LocalCluster), LabelRule::AllPositive, (2010, 1548), 2)?;
    let sample = gen.render(0);
    sample.image.save_png(out.join("original.png"))?;

    for side in [1000, 224] {
        let small = downscale_bicubic(&sample.image, side, side)?;
        small.save_png(out.join(format!("full-{side}.png")))?;
        println!("full image {}x{} -> {side}x{side}", sample.image.width(), sample.image.height());
    }

    // A 448px window around the planted cluster, halved to 224px.
    let c = sample.truth.cluster.expect("positive local images carry a cluster");
    let x = (c.cx as u32).saturating_sub(224).min(sample.image.width() - 448);
    let y = (c.cy as u32).saturating_sub(224).min(sample.image.height() - 448);
    let window = crop(&sample.image, &Rect::new(x, y, 448, 448))?;
    window.save_png(out.join("window-448.png"))?;
    downscale_bicubic(&window, 224, 224)?.save_png(out.join("window-448-to-224.png"))?;
    println!("window at ({x}, {y}) 448x448 -> 224x224");
    println!("wrote PNGs to {}", out.display());
    Ok(())
}
