//! Class- and resolution-balanced train/validation split over a cohort of
//! 210 + 210 images at three camera resolutions, and the error raised
//! when one cell is short.
//!
//! ```text
//! cargo run --release --example split -- [seed]
//! ```

use std::collections::BTreeMap;
use std::env;

use patchscope::dataset::{self, ManifestEntry, ResolutionClass, SplitSpec};
use patchscope::Label;

fn cohort() -> Vec<ManifestEntry> {
    let mut entries = Vec::new();
    for label in [Label::ActiveEoE, Label::NonEoE] {
        for (res, count) in [(ResolutionClass::R1, 29), (ResolutionClass::R2, 126), (ResolutionClass::R3, 55)] {
            for i in 0..count {
                let image_id = format!("{label}-{res}-{i:03}");
                entries.push(ManifestEntry {
                    path: format!("{image_id}.png").into(),
                    image_id,
                    label,
                    resolution_class: res,
                });
            }
        }
    }
    entries
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let spec = SplitSpec { seed, ..SplitSpec::default() };
    let entries = cohort();
    let split = dataset::balanced_split(&entries, &spec)?;

    let mut cells: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for e in &split.train {
        cells.entry((e.label.to_string(), e.resolution_class.to_string())).or_default().0 += 1;
    }
    for e in &split.validation {
        cells.entry((e.label.to_string(), e.resolution_class.to_string())).or_default().1 += 1;
    }
    println!("{:<10} {:<10} {:>5} {:>10}", "label", "resolution", "train", "validation");
    for ((label, res), (t, v)) in &cells {
        println!("{label:<10} {res:<10} {t:>5} {v:>10}");
    }
    println!("first validation images: {:?}", split.validation.iter().take(3).map(|e| &e.image_id).collect::<Vec<_>>());

    let short: Vec<ManifestEntry> = entries.into_iter().filter(|e| e.image_id != "NonEoE-1360x1024-054").collect();
    match dataset::balanced_split(&short, &spec) {
        Ok(_) => println!("unexpected: short cohort split"),
        Err(e) => println!("with one image removed: {e}"),
    }
    Ok(())
}
