//! Resampling, masking and coverage checked against brute-force oracles.

use patchscope::imaging::{self, coverage_fraction, crop, downscale_bicubic, quantize, tissue_mask, RasterImage, Rect, TissueMask};
use proptest::prelude::*;

// Cubic convolution kernel with a free parameter `a`.
fn cubic(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

// Sums the kernel over every integer tap in a wide window, mapping
// out-of-range taps to the nearest edge pixel.
fn direct_sum(img: &RasterImage, tw: u32, th: u32, ox: u32, oy: u32, c: usize) -> f64 {
    let sx = (f64::from(ox) + 0.5) * f64::from(img.width()) / f64::from(tw) - 0.5;
    let sy = (f64::from(oy) + 0.5) * f64::from(img.height()) / f64::from(th) - 0.5;
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let mut acc = 0.0;
    for j in -3..h + 3 {
        for i in -3..w + 3 {
            let k = cubic(sx - i as f64, -0.5) * cubic(sy - j as f64, -0.5);
            if k != 0.0 {
                let px = img.pixel(i.clamp(0, w - 1) as u32, j.clamp(0, h - 1) as u32);
                acc += k * f64::from(px[c]);
            }
        }
    }
    acc
}

#[test]
fn ramp_halving_matches_direct_summation() {
    let ramp = RasterImage::from_fn(8, 8, |x, y| [(x * 32) as u8, (y * 32) as u8, ((x + y) * 16) as u8]).unwrap();
    let out = downscale_bicubic(&ramp, 4, 4).unwrap();
    for oy in 0..4 {
        for ox in 0..4 {
            let got = out.pixel(ox, oy);
            for (c, &g) in got.iter().enumerate() {
                let want = direct_sum(&ramp, 4, 4, ox, oy, c).round().clamp(0.0, 255.0);
                assert!((f64::from(g) - want).abs() <= 1.0, "({ox},{oy}) channel {c}: {g} vs {want}");
            }
        }
    }
}

#[test]
fn quantize_rounds_half_away_from_zero() {
    assert_eq!(quantize(0.5), 1);
    assert_eq!(quantize(1.5), 2);
    assert_eq!(quantize(2.5), 3);
    assert_eq!(quantize(2.4999), 2);
    assert_eq!(quantize(-0.4), 0);
    assert_eq!(quantize(-3.0), 0);
    assert_eq!(quantize(254.5), 255);
    assert_eq!(quantize(300.0), 255);
}

fn image(w: u32, h: u32, seed: u64) -> RasterImage {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    RasterImage::from_fn(w, h, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let b = (s >> 33).to_le_bytes();
        [b[0], b[1], b[2]]
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantize_agrees_with_reference(v in -50.0f64..320.0) {
        prop_assert_eq!(quantize(v), v.round().clamp(0.0, 255.0) as u8);
    }

    #[test]
    fn constant_images_stay_constant(
        w in 1u32..40, h in 1u32..40, tw in 1u32..40, th in 1u32..40, rgb in any::<[u8; 3]>()
    ) {
        let img = RasterImage::filled(w, h, rgb).unwrap();
        let out = downscale_bicubic(&img, tw, th).unwrap();
        prop_assert_eq!(out, RasterImage::filled(tw, th, rgb).unwrap());
    }

    #[test]
    fn resampling_is_repeatable(w in 2u32..48, h in 2u32..48, tw in 1u32..48, th in 1u32..48, seed in any::<u64>()) {
        let img = image(w, h, seed);
        prop_assert_eq!(downscale_bicubic(&img, tw, th).unwrap(), downscale_bicubic(&img, tw, th).unwrap());
    }

    #[test]
    fn coverage_is_monotone_under_mask_growth(
        w in 1u32..24, h in 1u32..24, seed in any::<u64>(), rx in 0u32..24, ry in 0u32..24, rw in 1u32..24, rh in 1u32..24
    ) {
        let raw = image(w, h, seed);
        let small = TissueMask::from_fn(w, h, |x, y| raw.pixel(x, y)[0] < 64).unwrap();
        let large = TissueMask::from_fn(w, h, |x, y| raw.pixel(x, y)[0] < 64 || raw.pixel(x, y)[1] < 128).unwrap();
        let rect = Rect::new(rx % w, ry % h, rw.min(w - rx % w), rh.min(h - ry % h));
        let a = coverage_fraction(&small, &rect).unwrap();
        let b = coverage_fraction(&large, &rect).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn masking_commutes_with_cropping(
        w in 1u32..24, h in 1u32..24, seed in any::<u64>(), rx in 0u32..24, ry in 0u32..24, rw in 1u32..24, rh in 1u32..24
    ) {
        let img = image(w, h, seed);
        let rect = Rect::new(rx % w, ry % h, rw.min(w - rx % w), rh.min(h - ry % h));
        let a = tissue_mask(&crop(&img, &rect).unwrap(), 128);
        let b = imaging::crop_mask(&tissue_mask(&img, 128), &rect).unwrap();
        prop_assert_eq!(a, b);
    }
}
