//! Randomised invariants of tiling, augmentation and metrics.

use patchscope::augment::{self, AugmentSpec};
use patchscope::evaluation::{self, central_band_mass, ConfusionCounts};
use patchscope::imaging::{RasterImage, TissueMask};
use patchscope::tiling;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn windows_cover_every_pixel(w in 1u32..300, h in 1u32..300, half in 1u32..60) {
        let patch = 2 * half;
        let rects = tiling::tile(w, h, patch).unwrap();
        let mut hit = vec![false; (w * h) as usize];
        for r in &rects {
            prop_assert!(r.fits_within(w, h));
            for y in r.y..r.y + r.h {
                for x in r.x..r.x + r.w {
                    hit[(y * w + x) as usize] = true;
                }
            }
        }
        prop_assert!(hit.iter().all(|&b| b));
    }

    #[test]
    fn neighbours_overlap_by_half_a_patch(dim in 1u32..2000, half in 1u32..300) {
        let patch = 2 * half;
        let windows = tiling::axis_windows(dim, patch);
        for pair in windows.windows(2) {
            let step = pair[1].0 - pair[0].0;
            prop_assert!(step >= 1 && step <= half);
        }
        // Only the final, edge-clamped step may be shorter than the stride.
        if windows.len() > 2 {
            for pair in windows[..windows.len() - 1].windows(2) {
                prop_assert_eq!(pair[1].0 - pair[0].0, half);
            }
        }
        let last = windows.last().unwrap();
        prop_assert_eq!(last.0 + last.1, dim);
    }

    #[test]
    fn filtering_keeps_a_thresholded_subsequence(
        w in 8u32..120, h in 8u32..120, half in 2u32..30, seed in any::<u64>(), threshold in 0.0f64..1.0
    ) {
        let rects = tiling::tile(w, h, 2 * half).unwrap();
        let mut s = seed;
        let mask = TissueMask::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 60) < 5
        }).unwrap();
        let kept = tiling::filter_patches(&rects, &mask, threshold, "p", None).unwrap();
        let index = mask.coverage_index();
        let mut next = 0;
        for (i, r) in rects.iter().enumerate() {
            let cov = index.coverage(r).unwrap();
            if cov > threshold {
                prop_assert_eq!(kept[next].patch_index as usize, i);
                prop_assert_eq!(kept[next].rect, *r);
                next += 1;
            }
        }
        prop_assert_eq!(next, kept.len());
    }

    #[test]
    fn augmentation_keeps_dimensions(side in 4u32..48, seed in any::<u64>()) {
        let img = RasterImage::from_fn(side, side, |x, y| [(x * 5) as u8, (y * 7) as u8, 90]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = augment::augment(&img, &AugmentSpec::default(), &mut rng).unwrap();
        prop_assert_eq!((out.width(), out.height()), (side, side));
        let mut again = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(out, augment::augment(&img, &AugmentSpec::default(), &mut again).unwrap());
    }

    #[test]
    fn right_angle_moves_permute_pixels(w in 1u32..20, h in 1u32..20) {
        let img = RasterImage::from_fn(w, h, |x, y| [x as u8, y as u8, (x ^ y) as u8]).unwrap();
        let mut before: Vec<[u8; 3]> = img.as_raw().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
        before.sort_unstable();
        for out in [augment::rotate90(&img), augment::flip_horizontal(&img), augment::flip_vertical(&img)] {
            let mut after: Vec<[u8; 3]> = out.as_raw().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
            after.sort_unstable();
            prop_assert_eq!(&after, &before);
        }
    }

    #[test]
    fn predicted_prevalence_identity(tp in 0u64..200, fn_ in 0u64..200, tn in 0u64..200, fp in 0u64..200) {
        prop_assume!(tp + fn_ > 0 && tn + fp > 0);
        let c = ConfusionCounts { tp, fn_, tn, fp };
        let m = c.metrics();
        let (p, n) = ((tp + fn_) as f64, (tn + fp) as f64);
        let pp = (m.tpr.unwrap() * p + (1.0 - m.tnr.unwrap()) * n) / (p + n);
        prop_assert!((pp - m.pp).abs() < 1e-12);
        prop_assert!((m.accuracy - (tp + tn) as f64 / (p + n)).abs() < 1e-12);
    }

    #[test]
    fn wider_bands_hold_more_mass(
        probs in prop::collection::vec(0.0f64..=1.0, 1..200), lo in 0.0f64..0.5, hi in 0.5f64..1.0, widen in 0.0f64..0.5
    ) {
        let narrow = central_band_mass(&probs, (lo, hi)).unwrap();
        let wide = central_band_mass(&probs, ((lo - widen).max(0.0), (hi + widen).min(1.0))).unwrap();
        prop_assert!((0.0..=1.0).contains(&narrow));
        prop_assert!(narrow <= wide);
    }

    #[test]
    fn histograms_conserve_mass(probs in prop::collection::vec(0.0f64..=1.0, 0..300), bins in 1usize..40) {
        let h = evaluation::probability_histogram(&probs, patchscope::Label::ActiveEoE, bins).unwrap();
        prop_assert_eq!(h.total(), probs.len() as u64);
    }
}
