//! Raster images, background removal, coverage and bicubic resampling.
//!
//! All functions here are pure: they borrow their inputs and allocate their
//! outputs, so they can be called from any number of worker threads.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum-channel intensity below which a pixel counts as stained tissue.
pub const DEFAULT_BG_THRESHOLD: u8 = 240;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("rect {rect:?} exceeds image bounds {width}x{height}")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("image i/o error for {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// Axis-aligned pixel rectangle: top-left offset plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub const fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// True when the rect is non-empty and lies fully inside a
    /// `width` x `height` image.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && py >= self.y && px - self.x < self.w && py - self.y < self.h
    }

    fn check(&self, width: u32, height: u32) -> Result<()> {
        if self.fits_within(width, height) {
            Ok(())
        } else {
            Err(ImagingError::OutOfBounds {
                rect: *self,
                width,
                height,
            })
        }
    }
}

/// 8-bit RGB raster, row-major and channel-interleaved.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    /// Image filled with one colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::Argument(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = vec![0u8; width as usize * height as usize * 3];
        for (y, row) in pixels.chunks_exact_mut(width as usize * 3).enumerate() {
            for (x, px) in row.chunks_exact_mut(3).enumerate() {
                px.copy_from_slice(&f(x as u32, y as u32));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Load a PNG or binary PPM file (format chosen from the contents).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| ImagingError::Codec {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_raw(w, h, rgb.into_raw())
    }

    /// Write as 8-bit RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_as(path.as_ref(), image::ImageFormat::Png)
    }

    /// Write as binary PPM (P6).
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_as(path.as_ref(), image::ImageFormat::Pnm)
    }

    fn save_as(&self, path: &Path, format: image::ImageFormat) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            format,
        )
        .map_err(|source| ImagingError::Codec {
            path: path.display().to_string(),
            source,
        })
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        Err(ImagingError::Argument(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )))
    } else {
        Ok(())
    }
}

/// Binary foreground map, one flag per pixel (true = tissue).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl TissueMask {
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width as usize * height as usize {
            return Err(ImagingError::Argument(format!(
                "mask has {} entries, expected {}",
                bits.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn tissue_count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Summed-area table for O(1) coverage queries.
    pub fn coverage_index(&self) -> CoverageIndex {
        CoverageIndex::new(self)
    }

    /// Morphological opening with a square structuring element of the given
    /// radius. Removes specks smaller than the element; off by default in
    /// the pipeline.
    pub fn opened(&self, radius: u32) -> TissueMask {
        if radius == 0 {
            return self.clone();
        }
        let eroded = self.window_op(radius, true);
        eroded.window_op(radius, false)
    }

    // erode: keep pixel iff its whole (clipped) window is tissue;
    // dilate: set pixel iff any pixel in the window is tissue.
    fn window_op(&self, radius: u32, erode: bool) -> TissueMask {
        let index = self.coverage_index();
        let r = radius as i64;
        let (w, h) = (self.width as i64, self.height as i64);
        TissueMask::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            let x0 = (x - r).max(0);
            let y0 = (y - r).max(0);
            let x1 = (x + r + 1).min(w);
            let y1 = (y + r + 1).min(h);
            let rect = Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32);
            let count = index.tissue_in(&rect);
            if erode {
                count == rect.area()
            } else {
                count > 0
            }
        })
        .expect("dimensions already validated")
    }

    /// Write as binary PGM (P5) with tissue = 255, background = 0.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::save_buffer_with_format(
            path,
            &buf,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
            image::ImageFormat::Pnm,
        )
        .map_err(|source| ImagingError::Codec {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Summed-area table over a [`TissueMask`].
#[derive(Debug, Clone)]
pub struct CoverageIndex {
    width: u32,
    height: u32,
    // (width + 1) x (height + 1), row-major, first row/column zero.
    sums: Vec<u64>,
}

impl CoverageIndex {
    fn new(mask: &TissueMask) -> Self {
        let w = mask.width as usize;
        let h = mask.height as usize;
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += u64::from(mask.bits[y * w + x]);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: mask.width,
            height: mask.height,
            sums,
        }
    }

    /// Tissue pixel count inside `rect`; the rect must fit within the mask.
    pub fn tissue_in(&self, rect: &Rect) -> u64 {
        let stride = self.width as usize + 1;
        let (x0, y0) = (rect.x as usize, rect.y as usize);
        let (x1, y1) = (x0 + rect.w as usize, y0 + rect.h as usize);
        self.sums[y1 * stride + x1] + self.sums[y0 * stride + x0]
            - self.sums[y0 * stride + x1]
            - self.sums[y1 * stride + x0]
    }

    pub fn coverage(&self, rect: &Rect) -> Result<f64> {
        rect.check(self.width, self.height)?;
        Ok(self.tissue_in(rect) as f64 / rect.area() as f64)
    }
}

/// Background removal: a pixel is tissue iff its darkest channel is below
/// `bg_threshold`. Slide background is near-white in every channel.
pub fn tissue_mask(img: &RasterImage, bg_threshold: u8) -> TissueMask {
    let bits = img
        .pixels
        .chunks_exact(3)
        .map(|p| p[0].min(p[1]).min(p[2]) < bg_threshold)
        .collect();
    TissueMask {
        width: img.width,
        height: img.height,
        bits,
    }
}

/// Fraction of tissue pixels inside `rect`.
pub fn coverage_fraction(mask: &TissueMask, rect: &Rect) -> Result<f64> {
    rect.check(mask.width, mask.height)?;
    let mut count = 0u64;
    for y in rect.y..rect.y + rect.h {
        let row = y as usize * mask.width as usize;
        count += mask.bits[row + rect.x as usize..row + (rect.x + rect.w) as usize]
            .iter()
            .filter(|&&b| b)
            .count() as u64;
    }
    Ok(count as f64 / rect.area() as f64)
}

pub fn crop(img: &RasterImage, rect: &Rect) -> Result<RasterImage> {
    rect.check(img.width, img.height)?;
    let mut pixels = Vec::with_capacity(rect.area() as usize * 3);
    for y in rect.y..rect.y + rect.h {
        let start = img.offset(rect.x, y);
        pixels.extend_from_slice(&img.pixels[start..start + rect.w as usize * 3]);
    }
    Ok(RasterImage {
        width: rect.w,
        height: rect.h,
        pixels,
    })
}

pub fn crop_mask(mask: &TissueMask, rect: &Rect) -> Result<TissueMask> {
    rect.check(mask.width, mask.height)?;
    let mut bits = Vec::with_capacity(rect.area() as usize);
    for y in rect.y..rect.y + rect.h {
        let row = y as usize * mask.width as usize;
        bits.extend_from_slice(&mask.bits[row + rect.x as usize..row + (rect.x + rect.w) as usize]);
    }
    Ok(TissueMask {
        width: rect.w,
        height: rect.h,
        bits,
    })
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
#[inline]
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Round half away from zero, then clamp into the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() || v <= 0.0 {
        return 0;
    }
    if v >= 255.0 {
        return 255;
    }
    let t = v as u8;
    if v - f64::from(t) >= 0.5 {
        t + 1
    } else {
        t
    }
}

// First source tap (unclamped, may be negative) and the four weights for
// each output coordinate.
fn axis_taps(src_len: u32, dst_len: u32) -> Vec<(i64, [f64; 4])> {
    let scale = f64::from(src_len) / f64::from(dst_len);
    (0..dst_len)
        .map(|d| {
            let s = (f64::from(d) + 0.5) * scale - 0.5;
            let base = s.floor();
            let frac = s - base;
            let wts = [0, 1, 2, 3].map(|k| catmull_rom(frac - (f64::from(k) - 1.0)));
            (base as i64 - 1, wts)
        })
        .collect()
}

// Taps never reach further than this past either edge.
const PAD: usize = 2;

/// Resample to `target_w` x `target_h` with separable Catmull-Rom cubic
/// convolution, half-pixel-centred coordinates and clamped edge taps.
///
/// Intended for downscaling; upscaling is accepted for images smaller than
/// a patch window.
pub fn downscale_bicubic(img: &RasterImage, target_w: u32, target_h: u32) -> Result<RasterImage> {
    if target_w == 0 || target_h == 0 {
        return Err(ImagingError::Argument(format!(
            "target dimensions must be at least 1x1, got {target_w}x{target_h}"
        )));
    }
    let xs = axis_taps(img.width, target_w);
    let ys = axis_taps(img.height, target_h);
    let (sw, tw, sh) = (img.width as usize, target_w as usize, img.height as usize);

    // Horizontal pass, kept in full precision. Each source row is widened
    // with replicated edge pixels so every tap window is contiguous.
    let mut mid = Vec::with_capacity(tw * sh * 3);
    let mut padded = vec![0f64; (sw + 2 * PAD) * 3];
    for y in 0..sh {
        let row = &img.pixels[y * sw * 3..(y + 1) * sw * 3];
        for (i, px) in padded.chunks_exact_mut(3).enumerate() {
            let src = i.saturating_sub(PAD).min(sw - 1) * 3;
            px[0] = f64::from(row[src]);
            px[1] = f64::from(row[src + 1]);
            px[2] = f64::from(row[src + 2]);
        }
        for (first, w) in &xs {
            let at = (first + PAD as i64) as usize * 3;
            let p = &padded[at..at + 12];
            for c in 0..3 {
                mid.push(w[0] * p[c] + w[1] * p[3 + c] + w[2] * p[6 + c] + w[3] * p[9 + c]);
            }
        }
    }

    let mut pixels = vec![0u8; tw * target_h as usize * 3];
    for (y, &(idx, wts)) in ys.iter().enumerate() {
        let out = &mut pixels[y * tw * 3..(y + 1) * tw * 3];
        let last = sh as i64 - 1;
        let src = [0, 1, 2, 3].map(|k| {
            let r = (idx + k).clamp(0, last) as usize;
            &mid[r * tw * 3..(r + 1) * tw * 3]
        });
        let taps = src[0].iter().zip(src[1]).zip(src[2]).zip(src[3]);
        for (v, (((a, b), c), d)) in out.iter_mut().zip(taps) {
            *v = quantize(wts[0] * a + wts[1] * b + wts[2] * c + wts[3] * d);
        }
    }
    Ok(RasterImage {
        width: target_w,
        height: target_h,
        pixels,
    })
}

/// Bicubic sample at a continuous source position (pixel centres at
/// integer coordinates), with clamped edge taps. Returns unquantized values.
pub fn sample_bicubic(img: &RasterImage, sx: f64, sy: f64) -> [f64; 3] {
    let bx = sx.floor();
    let by = sy.floor();
    let (fx, fy) = (sx - bx, sy - by);
    let (bx, by) = (bx as i64, by as i64);
    let (lx, ly) = (i64::from(img.width) - 1, i64::from(img.height) - 1);
    let mut out = [0.0; 3];
    for j in 0..4 {
        let ty = (by - 1 + j).clamp(0, ly) as u32;
        let wy = catmull_rom(fy - (j as f64 - 1.0));
        for i in 0..4 {
            let tx = (bx - 1 + i).clamp(0, lx) as u32;
            let w = wy * catmull_rom(fx - (i as f64 - 1.0));
            let p = img.pixel(tx, ty);
            for c in 0..3 {
                out[c] += w * f64::from(p[c]);
            }
        }
    }
    out
}
