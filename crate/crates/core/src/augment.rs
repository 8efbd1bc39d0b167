//! Training-time geometric augmentation.
//!
//! Transforms are applied in a fixed order: scale, rotate, translate, flip.
//! Right-angle rotations, whole-pixel translations and flips are exact pixel
//! permutations; scaling and non-right-angle rotation share one bicubic
//! inverse-mapping pass. Exposed regions are filled with white.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{quantize, sample_bicubic, RasterImage};

const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("augmentation requires a square patch, got {0}x{1}")]
    NotSquare(u32, u32),
    #[error("invalid augmentation spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Right-angle rotations (degrees, clockwise) drawn uniformly.
    pub rotations: Vec<u32>,
    /// Extra continuous rotation drawn from `[-jitter, jitter]` degrees.
    pub rotation_jitter: f64,
    /// Maximum translation per axis as a fraction of the patch side.
    pub translation: f64,
    /// Multiplicative scale range `[lo, hi]`.
    pub scale: (f64, f64),
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotations: vec![0, 90, 180, 270],
            rotation_jitter: 0.0,
            translation: 0.1,
            scale: (0.9, 1.1),
            flip_h: true,
            flip_v: true,
        }
    }
}

impl AugmentSpec {
    /// A spec whose every draw is the identity transform.
    pub fn identity() -> Self {
        Self {
            rotations: vec![0],
            rotation_jitter: 0.0,
            translation: 0.0,
            scale: (1.0, 1.0),
            flip_h: false,
            flip_v: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotations.iter().all(|&r| r == 0)
            && self.rotation_jitter == 0.0
            && self.translation == 0.0
            && self.scale == (1.0, 1.0)
            && !self.flip_h
            && !self.flip_v
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let (lo, hi) = self.scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(AugmentError::Spec(format!("scale range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        if !(0.0..=0.5).contains(&self.translation) {
            return Err(AugmentError::Spec(format!(
                "translation fraction must lie in [0, 0.5], got {}",
                self.translation
            )));
        }
        if self.rotations.is_empty() || self.rotations.iter().any(|r| ![0, 90, 180, 270].contains(r)) {
            return Err(AugmentError::Spec(format!(
                "rotations must be a non-empty subset of {{0, 90, 180, 270}}, got {:?}",
                self.rotations
            )));
        }
        if !(self.rotation_jitter >= 0.0 && self.rotation_jitter.is_finite()) {
            return Err(AugmentError::Spec(format!(
                "rotation jitter must be finite and non-negative, got {}",
                self.rotation_jitter
            )));
        }
        Ok(())
    }
}

/// One concrete draw from an [`AugmentSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    pub quarter_turns: u32,
    pub jitter_deg: f64,
    pub dx: i64,
    pub dy: i64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        quarter_turns: 0,
        jitter_deg: 0.0,
        dx: 0,
        dy: 0,
        flip_h: false,
        flip_v: false,
    };

    /// Draw parameters for a `size` x `size` patch. Draw order is fixed.
    pub fn sample<R: Rng + ?Sized>(spec: &AugmentSpec, size: u32, rng: &mut R) -> Self {
        let (lo, hi) = spec.scale;
        let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let rotation = *spec.rotations.choose(rng).unwrap_or(&0);
        let jitter_deg = if spec.rotation_jitter > 0.0 {
            rng.random_range(-spec.rotation_jitter..=spec.rotation_jitter)
        } else {
            0.0
        };
        let max_shift = spec.translation * f64::from(size);
        let shift = |rng: &mut R| {
            if max_shift > 0.0 {
                rng.random_range(-max_shift..=max_shift).round() as i64
            } else {
                0
            }
        };
        let dx = shift(rng);
        let dy = shift(rng);
        let flip_h = spec.flip_h && rng.random_bool(0.5);
        let flip_v = spec.flip_v && rng.random_bool(0.5);
        Self {
            scale,
            quarter_turns: (rotation / 90) % 4,
            jitter_deg,
            dx,
            dy,
            flip_h,
            flip_v,
        }
    }
}

/// Draw parameters from `rng` and apply them to a square patch.
pub fn augment<R: Rng + ?Sized>(
    patch: &RasterImage,
    spec: &AugmentSpec,
    rng: &mut R,
) -> Result<RasterImage, AugmentError> {
    spec.validate()?;
    if !patch.is_square() {
        return Err(AugmentError::NotSquare(patch.width(), patch.height()));
    }
    let params = AugmentParams::sample(spec, patch.width(), rng);
    Ok(apply(patch, &params))
}

/// Apply a concrete parameter set: scale, rotate, translate, flip.
pub fn apply(patch: &RasterImage, p: &AugmentParams) -> RasterImage {
    let mut img = if p.scale != 1.0 || p.jitter_deg != 0.0 {
        scale_rotate(patch, p.scale, p.jitter_deg)
    } else {
        patch.clone()
    };
    for _ in 0..p.quarter_turns {
        img = rotate90(&img);
    }
    if p.dx != 0 || p.dy != 0 {
        img = translate(&img, p.dx, p.dy);
    }
    if p.flip_h {
        img = flip_horizontal(&img);
    }
    if p.flip_v {
        img = flip_vertical(&img);
    }
    img
}

/// Quarter turn clockwise.
pub fn rotate90(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    RasterImage::from_fn(h, w, |x, y| img.pixel(y, h - 1 - x)).expect("non-empty source")
}

pub fn flip_horizontal(img: &RasterImage) -> RasterImage {
    let w = img.width();
    RasterImage::from_fn(w, img.height(), |x, y| img.pixel(w - 1 - x, y)).expect("non-empty source")
}

pub fn flip_vertical(img: &RasterImage) -> RasterImage {
    let h = img.height();
    RasterImage::from_fn(img.width(), h, |x, y| img.pixel(x, h - 1 - y)).expect("non-empty source")
}

/// Shift content by whole pixels; vacated pixels become white.
pub fn translate(img: &RasterImage, dx: i64, dy: i64) -> RasterImage {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    RasterImage::from_fn(img.width(), img.height(), |x, y| {
        let sx = i64::from(x) - dx;
        let sy = i64::from(y) - dy;
        if (0..w).contains(&sx) && (0..h).contains(&sy) {
            img.pixel(sx as u32, sy as u32)
        } else {
            WHITE
        }
    })
    .expect("non-empty source")
}

// Scale about the centre then rotate clockwise by `deg`, by inverse mapping.
fn scale_rotate(img: &RasterImage, scale: f64, deg: f64) -> RasterImage {
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (sin, cos) = deg.to_radians().sin_cos();
    RasterImage::from_fn(img.width(), img.height(), |x, y| {
        let u = f64::from(x) - cx;
        let v = f64::from(y) - cy;
        let sx = (u * cos + v * sin) / scale + cx;
        let sy = (-u * sin + v * cos) / scale + cy;
        if sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5 {
            WHITE
        } else {
            let v = sample_bicubic(img, sx, sy);
            [quantize(v[0]), quantize(v[1]), quantize(v[2])]
        }
    })
    .expect("non-empty source")
}
