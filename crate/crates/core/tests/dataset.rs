//! Split enumeration and synthetic ground truth checked from first principles.

use std::collections::{BTreeMap, BTreeSet};

use patchscope::dataset::{self, LabelRule, PatternKind, SynthGenerator, SynthPattern};
use patchscope::imaging::{tissue_mask, Rect};
use patchscope::tiling;
use patchscope::{Label, ManifestEntry, ResolutionClass, SplitSpec};
use proptest::prelude::*;

fn six_images() -> Vec<ManifestEntry> {
    let mut out = Vec::new();
    for label in [Label::ActiveEoE, Label::NonEoE] {
        for res in [ResolutionClass::R1, ResolutionClass::R2, ResolutionClass::R3] {
            let id = format!("{label}-{res}");
            out.push(ManifestEntry {
                path: format!("{id}.png").into(),
                image_id: id,
                label,
                resolution_class: res,
            });
        }
    }
    out
}

#[test]
fn every_validation_choice_occurs_across_seeds() {
    let manifest = six_images();
    let mut seen: BTreeMap<Label, BTreeSet<String>> = BTreeMap::new();
    for seed in 0..200 {
        let spec = SplitSpec {
            train_per_class: 2,
            val_per_class: 1,
            per_resolution_counts: BTreeMap::new(),
            seed,
        };
        let split = dataset::balanced_split(&manifest, &spec).unwrap();
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.validation.len(), 2);
        let train: BTreeSet<&str> = split.train.iter().map(|e| e.image_id.as_str()).collect();
        let val: BTreeSet<&str> = split.validation.iter().map(|e| e.image_id.as_str()).collect();
        assert!(train.is_disjoint(&val), "seed {seed}");
        assert_eq!(train.len() + val.len(), 6);
        for label in [Label::ActiveEoE, Label::NonEoE] {
            let picked: Vec<&ManifestEntry> = split.validation.iter().filter(|e| e.label == label).collect();
            assert_eq!(picked.len(), 1);
            seen.entry(label).or_default().insert(picked[0].image_id.clone());
        }
    }
    for (label, ids) in seen {
        assert_eq!(ids.len(), 3, "{label}: only {ids:?} were ever held out");
    }
}

#[test]
fn diffuse_positives_carry_the_configured_mark_density() {
    let pattern = SynthPattern::preset(PatternKind::GlobalDiffuse);
    let gen = SynthGenerator::new(pattern.clone(), LabelRule::Alternate, (1024, 1024), 11).unwrap();
    let mark_area = std::f64::consts::PI * (f64::from(pattern.feature_size) / 2.0).powi(2);
    let mut positives = 0;
    for i in 0..200 {
        if gen.entry(i).label != Label::ActiveEoE {
            continue;
        }
        positives += 1;
        let s = gen.render(i);
        // Expected count from the rendered tissue area, +/- 10% plus rounding.
        let tissue = tissue_mask(&s.image, 240).tissue_count() as f64;
        let expected = pattern.feature_density * tissue / mark_area;
        let n = s.truth.marks.len() as f64;
        assert!(
            n >= (0.9 * expected).floor() && n <= (1.1 * expected).ceil(),
            "{}: {n} marks, expected about {expected:.1}",
            s.entry.image_id
        );
    }
    assert_eq!(positives, 100);
}

fn rect_meets_disk(r: &Rect, cx: f64, cy: f64, radius: f64) -> bool {
    let nx = cx.clamp(f64::from(r.x), f64::from(r.x + r.w));
    let ny = cy.clamp(f64::from(r.y), f64::from(r.y + r.h));
    (nx - cx).powi(2) + (ny - cy).powi(2) <= radius * radius
}

#[test]
fn local_cluster_touches_few_tissue_patches() {
    let pattern = SynthPattern::preset(PatternKind::LocalCluster);
    assert_eq!(pattern.cluster_diameter, 64);
    let gen = SynthGenerator::new(pattern, LabelRule::AllPositive, (1024, 1024), 21).unwrap();
    let rects = tiling::tile(1024, 1024, 224).unwrap();
    for i in 0..12 {
        let s = gen.render(i);
        let kept = tiling::filter_patches(&rects, &tissue_mask(&s.image, 240), 0.10, "", None).unwrap();
        let c = s.truth.cluster.expect("positives record their cluster");
        let hits = kept.iter().filter(|p| rect_meets_disk(&p.rect, c.cx, c.cy, c.diameter / 2.0)).count();
        let fraction = hits as f64 / kept.len() as f64;
        assert!(hits >= 1 && fraction < 0.15, "{}: {hits} of {} patches", s.entry.image_id, kept.len());
    }
}

fn manifest(n_per_class: usize) -> Vec<ManifestEntry> {
    let gen = SynthGenerator::new(SynthPattern::preset(PatternKind::HalfTissue), LabelRule::Alternate, (128, 128), 0).unwrap();
    gen.manifest(2 * n_per_class)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_are_reproducible_and_disjoint(n in 2usize..30, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let entries = manifest(n);
        let val = ((n as f64) * frac) as usize;
        let spec = SplitSpec { train_per_class: n - val, val_per_class: val, per_resolution_counts: BTreeMap::new(), seed };
        let a = dataset::balanced_split(&entries, &spec).unwrap();
        let b = dataset::balanced_split(&entries, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        let train: BTreeSet<&str> = a.train.iter().map(|e| e.image_id.as_str()).collect();
        let validation: BTreeSet<&str> = a.validation.iter().map(|e| e.image_id.as_str()).collect();
        prop_assert!(train.is_disjoint(&validation));
        prop_assert_eq!(a.validation.len(), 2 * val);
        prop_assert_eq!(a.validation.iter().filter(|e| e.label == Label::ActiveEoE).count(), val);
    }
}
