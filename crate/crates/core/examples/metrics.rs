//! Whole-image metrics from confusion counts: the four-strategy table and
//! its ROC-space plot.
//!
//! The counts describe a 63/63 validation cohort; the plot goes to
//! `roc.svg` in the given directory.
//!
//! ```text
//! cargo run --release --example metrics -- [out-dir]
//! ```

use std::env;
use std::path::PathBuf;

use patchscope::evaluation::{roc_point, roc_svg, ConfusionCounts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out)?;

    let rows = [
        ("full-1000", ConfusionCounts { tp: 47, fn_: 16, tn: 61, fp: 2 }),
        ("full-224", ConfusionCounts { tp: 41, fn_: 22, tn: 56, fp: 7 }),
        ("patch-448", ConfusionCounts { tp: 52, fn_: 11, tn: 55, fp: 8 }),
        ("patch-224", ConfusionCounts { tp: 52, fn_: 11, tn: 49, fp: 14 }),
    ];
    println!("{:<10} {:>3} {:>3} {:>3} {:>3}  TPR TNR Accuracy PP", "strategy", "tp", "fn", "tn", "fp");
    let mut points = Vec::new();
    for (name, c) in rows {
        let m = c.metrics();
        println!("{name:<10} {:>3} {:>3} {:>3} {:>3}  {}", c.tp, c.fn_, c.tn, c.fp, m.display_row());
        if let Some(p) = roc_point(&m) {
            points.push((name.to_string(), p));
        }
    }
    let path = out.join("roc.svg");
    std::fs::write(&path, roc_svg(&points))?;
    println!("wrote {}", path.display());
    Ok(())
}
