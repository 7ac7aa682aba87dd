//! Size/aspect gating and center-crop geometry.
//!
//! The first pipeline stage drops images that are too small or too
//! elongated before any pixel work happens, and computes the square
//! center-crop rectangle used by later pixel scoring. Everything here is a
//! pure function of integer dimensions.

use serde::{Deserialize, Serialize};

use crate::manifest::ReasonCode;

/// An axis-aligned crop window inside a source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Geometry gate configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    /// Both dimensions must be at least this many pixels.
    pub min_side: u32,
    /// min(w/h, h/w) must be at least this ratio.
    pub aspect_threshold: f64,
    /// Side length of the square center crop.
    pub crop_target: u32,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { min_side: 1024, aspect_threshold: 0.6666, crop_target: 1024 }
    }
}

impl GeometryConfig {
    /// Configuration violations, each naming the offending field; empty when
    /// the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.aspect_threshold.is_finite()
            || self.aspect_threshold <= 0.0
            || self.aspect_threshold > 1.0
        {
            out.push(format!(
                "geometry.aspect_threshold must lie in (0, 1], got {}",
                self.aspect_threshold
            ));
        }
        if self.crop_target == 0 {
            out.push("geometry.crop_target must be at least 1".into());
        }
        if self.min_side < self.crop_target {
            out.push(format!(
                "geometry.min_side ({}) must be at least geometry.crop_target ({})",
                self.min_side, self.crop_target
            ));
        }
        out
    }
}

/// Errors from geometry operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("zero dimension: {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("image {width}x{height} is smaller than the {target}x{target} crop target")]
    SmallerThanTarget { width: u32, height: u32, target: u32 },
    #[error("crop ({x},{y} {w}x{h}) exceeds source bounds {width}x{height}")]
    CropOutOfBounds { x: u32, y: u32, w: u32, h: u32, width: u32, height: u32 },
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BufferSizeMismatch { width: u32, height: u32, got: usize },
}

/// The smaller of the two aspect ratios, `min(w/h, h/w)` — always in (0, 1],
/// symmetric in its arguments, and 1 exactly for squares.
pub fn min_aspect_ratio(width: u32, height: u32) -> Result<f64, GeometryError> {
    if width == 0 || height == 0 {
        return Err(GeometryError::ZeroDimension { width, height });
    }
    let w = f64::from(width);
    let h = f64::from(height);
    Ok((w / h).min(h / w))
}

/// The outcome of the geometry gate: pass/fail plus the failing rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefilterVerdict {
    pub passed: bool,
    pub reasons: Vec<ReasonCode>,
}

/// Apply the two geometry gates in sequence.
///
/// The size floor is judged first; aspect ratio is only evaluated for images
/// that meet it, so an undersized elongated image reports `min_size` alone.
/// Zero dimensions fail the size gate like any other undersized input —
/// never an error.
pub fn passes_prefilter(width: u32, height: u32, cfg: &GeometryConfig) -> PrefilterVerdict {
    if width < cfg.min_side || height < cfg.min_side || width == 0 || height == 0 {
        return PrefilterVerdict { passed: false, reasons: vec![ReasonCode::MinSize] };
    }
    let ratio = min_aspect_ratio(width, height)
        .expect("dimensions are positive past the size gate");
    if ratio < cfg.aspect_threshold {
        return PrefilterVerdict { passed: false, reasons: vec![ReasonCode::AspectRatio] };
    }
    PrefilterVerdict { passed: true, reasons: Vec::new() }
}

/// The square `target`×`target` window centered in a `width`×`height` image.
///
/// Offsets are `floor((dim − target) / 2)`: an odd leftover pixel goes to
/// the right/bottom edge.
pub fn center_crop_rect(width: u32, height: u32, target: u32) -> Result<CropRect, GeometryError> {
    if width < target || height < target {
        return Err(GeometryError::SmallerThanTarget { width, height, target });
    }
    Ok(CropRect { x: (width - target) / 2, y: (height - target) / 2, w: target, h: target })
}

// ---------------------------------------------------------------------------
// Pixel buffers
// ---------------------------------------------------------------------------

/// A row-major RGB pixel buffer. The crate never decodes images itself;
/// callers hand decoded pixels in and get crops and scores out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    width: u32,
    height: u32,
    data: Vec<[u8; 3]>,
}

impl PixelBuffer {
    pub fn new(width: u32, height: u32, data: Vec<[u8; 3]>) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(GeometryError::BufferSizeMismatch { width, height, got: data.len() });
        }
        Ok(PixelBuffer { width, height, data })
    }

    /// A solid single-color buffer (test images, padding).
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        PixelBuffer { width, height, data: vec![rgb; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// All pixels, row-major.
    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    /// Copy out the window described by `rect`.
    pub fn crop(&self, rect: CropRect) -> Result<PixelBuffer, GeometryError> {
        let x_end = rect.x.checked_add(rect.w);
        let y_end = rect.y.checked_add(rect.h);
        if x_end.is_none_or(|e| e > self.width) || y_end.is_none_or(|e| e > self.height) {
            return Err(GeometryError::CropOutOfBounds {
                x: rect.x,
                y: rect.y,
                w: rect.w,
                h: rect.h,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(rect.w as usize * rect.h as usize);
        for row in rect.y..rect.y + rect.h {
            let start = row as usize * self.width as usize + rect.x as usize;
            data.extend_from_slice(&self.data[start..start + rect.w as usize]);
        }
        Ok(PixelBuffer { width: rect.w, height: rect.h, data })
    }

    /// Center-crop to a `target`×`target` square.
    pub fn center_crop(&self, target: u32) -> Result<PixelBuffer, GeometryError> {
        let rect = center_crop_rect(self.width, self.height, target)?;
        self.crop(rect)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
