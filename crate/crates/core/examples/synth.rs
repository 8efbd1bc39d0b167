//! Generate a small synthetic cohort on disk: PNG images, a manifest and
//! a ground-truth sidecar per image.
//!
//! ```text
//! cargo run --release --example synth -- [pattern] [n] [out-dir]
//! ```

use std::env;
use std::fs::{self, File};
use std::path::PathBuf;

use patchscope::dataset::{self, LabelRule, PatternKind, SynthGenerator, SynthPattern};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: PatternKind = env::args().nth(1).unwrap_or_else(|| "edge".into()).parse()?;
    let n: usize = env::args().nth(2).map_or(Ok(6), |s| s.parse())?;
    let out = PathBuf::from(env::args().nth(3).unwrap_or_else(|| "synth-out".into()));
    fs::create_dir_all(&out)?;

    let gen = SynthGenerator::new(SynthPattern::preset(kind), LabelRule::Alternate, (1360, 1024), 9)?;
    for i in 0..n {
        let s = gen.render(i);
        s.image.save_png(out.join(&s.entry.path))?;
        fs::write(out.join(format!("{}.truth.json", s.entry.image_id)), serde_json::to_string_pretty(&s.truth)?)?;
        println!(
            "{}  {:<9}  {:>3} marks  {} tissue pixels",
            s.entry.image_id,
            s.entry.label.to_string(),
            s.truth.marks.len(),
            s.truth.tissue_pixels
        );
    }
    dataset::write_manifest(File::create(out.join("manifest.csv"))?, &gen.manifest(n))?;
    println!("wrote {n} images and manifest.csv to {}", out.display());
    Ok(())
}
