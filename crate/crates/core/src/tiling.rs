//! Half-stride sliding-window tiling and the tissue-coverage filter.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{ImagingError, Rect, TissueMask};
use crate::Label;

/// Patches must hold strictly more than this tissue fraction to be kept.
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A kept window within a parent image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRef {
    pub parent_id: String,
    /// Position in the full (unfiltered) row-major window enumeration.
    pub patch_index: u32,
    pub rect: Rect,
    pub coverage: f64,
    pub inherited_label: Option<Label>,
}

/// Window origins along one axis, each with its extent.
///
/// Origins step by `patch / 2`; the last one is pulled back to
/// `dim - patch` so the final window ends flush with the edge. An axis no
/// longer than the patch gets a single window spanning the whole axis.
pub fn axis_windows(dim: u32, patch: u32) -> Vec<(u32, u32)> {
    if dim <= patch {
        return vec![(0, dim)];
    }
    let stride = patch / 2;
    let last = dim - patch;
    let mut origins: Vec<u32> = (0..).map(|k| k * stride).take_while(|&o| o < last).collect();
    origins.push(last);
    origins.into_iter().map(|o| (o, patch)).collect()
}

/// Enumerate sliding windows of side `patch` with stride `patch / 2`,
/// row-major by (y, x).
pub fn tile(img_w: u32, img_h: u32, patch: u32) -> Result<Vec<Rect>, TilingError> {
    if patch < 2 || !patch.is_multiple_of(2) {
        return Err(TilingError::Argument(format!(
            "patch size must be even and at least 2, got {patch}"
        )));
    }
    if img_w == 0 || img_h == 0 {
        return Err(TilingError::Argument(format!(
            "image dimensions must be at least 1x1, got {img_w}x{img_h}"
        )));
    }
    let xs = axis_windows(img_w, patch);
    let ys = axis_windows(img_h, patch);
    let mut rects = Vec::with_capacity(xs.len() * ys.len());
    for &(y, h) in &ys {
        for &(x, w) in &xs {
            rects.push(Rect::new(x, y, w, h));
        }
    }
    Ok(rects)
}

/// Keep windows whose tissue coverage is strictly greater than
/// `threshold`, preserving order. `patch_index` records each window's
/// position in `rects`.
pub fn filter_patches(
    rects: &[Rect],
    mask: &TissueMask,
    threshold: f64,
    parent_id: &str,
    label: Option<Label>,
) -> Result<Vec<PatchRef>, TilingError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TilingError::Argument(format!(
            "coverage threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let index = mask.coverage_index();
    let mut kept = Vec::new();
    for (i, rect) in rects.iter().enumerate() {
        let coverage = index.coverage(rect)?;
        if coverage > threshold {
            kept.push(PatchRef {
                parent_id: parent_id.to_string(),
                patch_index: i as u32,
                rect: *rect,
                coverage,
                inherited_label: label,
            });
        }
    }
    Ok(kept)
}

/// Write a patch listing as CSV:
/// `parent_id,patch_index,x,y,w,h,coverage,label`.
pub fn write_patch_csv<W: Write>(writer: W, patches: &[PatchRef]) -> Result<(), TilingError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["parent_id", "patch_index", "x", "y", "w", "h", "coverage", "label"])?;
    for p in patches {
        out.write_record([
            p.parent_id.clone(),
            p.patch_index.to_string(),
            p.rect.x.to_string(),
            p.rect.y.to_string(),
            p.rect.w.to_string(),
            p.rect.h.to_string(),
            format!("{:.6}", p.coverage),
            p.inherited_label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origins(rects: &[Rect]) -> (Vec<u32>, Vec<u32>) {
        let mut xs: Vec<u32> = rects.iter().map(|r| r.x).collect();
        let mut ys: Vec<u32> = rects.iter().map(|r| r.y).collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        (xs, ys)
    }

    #[test]
    fn window_equals_image() {
        assert_eq!(tile(224, 224, 224).unwrap(), vec![Rect::new(0, 0, 224, 224)]);
    }

    #[test]
    fn double_size_gives_nine() {
        let rects = tile(448, 448, 224).unwrap();
        // enumeration oracle: origins 0, 112, 224 per axis
        let mut expected = Vec::new();
        for y in [0, 112, 224] {
            for x in [0, 112, 224] {
                expected.push(Rect::new(x, y, 224, 224));
            }
        }
        assert_eq!(rects, expected);
    }

    #[test]
    fn clamped_last_origin() {
        let rects = tile(500, 224, 224).unwrap();
        let (xs, ys) = origins(&rects);
        assert_eq!(xs, vec![0, 112, 224, 276]);
        assert_eq!(ys, vec![0]);
        assert_eq!(rects.len(), 4);
        let mut covered = [false; 500];
        for r in &rects {
            for c in r.x..r.x + r.w {
                covered[c as usize] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn small_image_single_pseudo_patch() {
        assert_eq!(tile(100, 80, 224).unwrap(), vec![Rect::new(0, 0, 100, 80)]);
        assert_eq!(tile(100, 300, 224).unwrap().len(), 2);
    }

    #[test]
    fn bad_patch_sizes() {
        assert!(tile(10, 10, 0).is_err());
        assert!(tile(10, 10, 1).is_err());
        assert!(tile(10, 10, 7).is_err());
        assert!(tile(0, 10, 4).is_err());
    }

    #[test]
    fn filter_all_and_nothing() {
        let rects = tile(448, 448, 224).unwrap();
        let all = TissueMask::from_fn(448, 448, |_, _| true).unwrap();
        let kept = filter_patches(&rects, &all, 0.1, "a", Some(Label::NonEoE)).unwrap();
        assert_eq!(kept.len(), 9);
        assert!(kept.iter().all(|p| p.coverage == 1.0));
        assert_eq!(kept[4].patch_index, 4);
        let none = TissueMask::from_fn(448, 448, |_, _| false).unwrap();
        assert!(filter_patches(&rects, &none, 0.1, "a", None).unwrap().is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        // 10x10 windows: exactly 10 tissue pixels (10.0%) vs 21 of 200 (10.5%).
        let mask = TissueMask::from_fn(30, 20, |x, y| {
            (x < 10 && y < 10 && y == 0) || (x >= 10 && y < 20 && x < 20 && (y * 10 + (x - 10)) < 21)
        })
        .unwrap();
        let exact = Rect::new(0, 0, 10, 10);
        let above = Rect::new(10, 0, 10, 20);
        let kept = filter_patches(&[exact, above], &mask, 0.10, "p", None).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].rect, above);
        assert_eq!(kept[0].coverage, 0.105);
        assert_eq!(kept[0].patch_index, 1);
    }

    #[test]
    fn threshold_range_checked() {
        let mask = TissueMask::from_fn(4, 4, |_, _| true).unwrap();
        assert!(filter_patches(&[], &mask, 1.5, "p", None).is_err());
        assert!(filter_patches(&[], &mask, -0.1, "p", None).is_err());
    }

    #[test]
    fn csv_listing() {
        let mask = TissueMask::from_fn(4, 4, |_, _| true).unwrap();
        let kept = filter_patches(&tile(4, 4, 4).unwrap(), &mask, 0.1, "img-1", Some(Label::ActiveEoE)).unwrap();
        let mut buf = Vec::new();
        write_patch_csv(&mut buf, &kept).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "parent_id,patch_index,x,y,w,h,coverage,label\nimg-1,0,0,0,4,4,1.000000,ActiveEoE\n"
        );
    }
}
