//! Tile a synthetic biopsy into half-overlapping windows, keep those with
//! more than 10% tissue and print the listing as CSV.
//!
//! ```text
//! cargo run --release --example tiling -- [patch] [width]x[height]
//! ```

use std::env;
use std::io;

use patchscope::dataset::{parse_dims, LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::{tissue_mask, DEFAULT_BG_THRESHOLD};
use patchscope::tiling::{self, DEFAULT_COVERAGE_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let patch: u32 = env::args().nth(1).map_or(Ok(224), |s| s.parse())?;
    let dims = parse_dims(&env::args().nth(2).unwrap_or_else(|| "1360x1024".into()))?;

    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::HalfTissue), LabelRule::AllPositive, dims, 5)?;
    let sample = gen.render(0);
    let mask = tissue_mask(&sample.image, DEFAULT_BG_THRESHOLD);

    let windows = tiling::tile(dims.0, dims.1, patch)?;
    let kept = tiling::filter_patches(
        &windows,
        &mask,
        DEFAULT_COVERAGE_THRESHOLD,
        &sample.entry.image_id,
        Some(sample.entry.label),
    )?;
    eprintln!(
        "{}x{} image, {patch}px windows at stride {}: {} windows, {} above {:.0}% tissue",
        dims.0,
        dims.1,
        patch / 2,
        windows.len(),
        kept.len(),
        DEFAULT_COVERAGE_THRESHOLD * 100.0
    );
    tiling::write_patch_csv(io::stdout().lock(), &kept)?;
    Ok(())
}
