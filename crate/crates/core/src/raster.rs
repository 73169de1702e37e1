//! Pixel containers shared by every stage: RGB images, RGBA sprites, boolean
//! masks and scalar maps (disparity and metric depth).
//!
//! All rasters are row-major with `(0, 0)` at the top-left pixel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BufferLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("invalid value {value} at pixel ({col}, {row}): {reason}")]
    InvalidValue {
        col: usize,
        row: usize,
        value: f64,
        reason: &'static str,
    },
    #[error("dimension mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
}

/// Axis-aligned pixel rectangle, half-open: covers columns `x0..x0+width`
/// and rows `y0..y0+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn x1(&self) -> usize {
        self.x0 + self.width
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x1() <= width && self.y1() <= height
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x0 && col < self.x1() && row >= self.y0 && row < self.y1()
    }
}

/// A rectangle expressed as fractions of the frame, `[left, right) x [top, bottom)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracRect {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl FracRect {
    pub const FULL: FracRect = FracRect {
        left: 0.0,
        right: 1.0,
        top: 0.0,
        bottom: 1.0,
    };

    /// Resolve against a frame. Bounds are floored, so the full rect maps to
    /// the whole frame exactly.
    pub fn resolve(&self, width: usize, height: usize) -> Rect {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        let x0 = (clamp(self.left) * width as f64).floor() as usize;
        let x1 = (clamp(self.right) * width as f64).floor() as usize;
        let y0 = (clamp(self.top) * height as f64).floor() as usize;
        let y1 = (clamp(self.bottom) * height as f64).floor() as usize;
        Rect::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

impl Default for FracRect {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 3,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Rgb,
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(col, row).0);
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        Rgb([self.data[i], self.data[i + 1], self.data[i + 2]])
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, px: Rgb) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&px.0);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| Rgb([c[0], c[1], c[2]]))
    }

    /// Copy of the sub-window `rect`; `None` if it does not fit.
    pub fn window(&self, rect: Rect) -> Option<ImageBuffer> {
        if !rect.fits_in(self.width, self.height) {
            return None;
        }
        let mut data = Vec::with_capacity(rect.area() * 3);
        for row in rect.y0..rect.y1() {
            let a = (row * self.width + rect.x0) * 3;
            data.extend_from_slice(&self.data[a..a + rect.width * 3]);
        }
        Some(ImageBuffer {
            width: rect.width,
            height: rect.height,
            data,
        })
    }

    /// Number of pixels that differ from `other` (same dimensions required).
    pub fn count_differences(&self, other: &ImageBuffer) -> Option<usize> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        Some(
            self.data
                .chunks_exact(3)
                .zip(other.data.chunks_exact(3))
                .filter(|(a, b)| a != b)
                .count(),
        )
    }
}

/// 8-bit RGBA raster, used for object sprites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbaImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width * height * 4 {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 4,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 4],
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 4);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(col, row));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> [u8; 4] {
        let i = (row * self.width + col) * 4;
        [
            self.data[i],
            self.data[i + 1],
            self.data[i + 2],
            self.data[i + 3],
        ]
    }

    #[inline]
    pub fn alpha(&self, col: usize, row: usize) -> u8 {
        self.data[(row * self.width + col) * 4 + 3]
    }

    /// Mask of pixels with non-zero alpha.
    pub fn alpha_support(&self) -> BitMask {
        BitMask::from_fn(self.width, self.height, |c, r| self.alpha(c, r) > 0)
    }

    /// Copy with alpha forced to zero wherever `keep` is false.
    pub fn masked(&self, keep: &BitMask) -> RgbaImage {
        let mut out = self.clone();
        for row in 0..self.height {
            for col in 0..self.width {
                if !keep.get(col, row) {
                    out.data[(row * self.width + col) * 4 + 3] = 0;
                }
            }
        }
        out
    }
}

/// Boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width * height {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 1,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Bounding box of the set pixels.
    pub fn bounding_box(&self) -> Option<Rect> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0;
        let mut y1 = 0;
        for (c, r) in self.iter_set() {
            x0 = x0.min(c);
            y0 = y0.min(r);
            x1 = x1.max(c);
            y1 = y1.max(r);
        }
        (x0 != usize::MAX).then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Centroid `(col, row)` of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for (c, r) in self.iter_set() {
            n += 1;
            sx += c as f64;
            sy += r as f64;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn and(&self, other: &BitMask) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn window(&self, rect: Rect) -> Option<BitMask> {
        if !rect.fits_in(self.width, self.height) {
            return None;
        }
        Some(BitMask::from_fn(rect.width, rect.height, |c, r| {
            self.get(rect.x0 + c, rect.y0 + r)
        }))
    }
}

/// Per-pixel disparity normalized by image width, with an optional validity
/// mask. Valid values are finite and lie in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Option<Vec<bool>>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        Self::with_validity(width, height, values, None)
    }

    pub fn with_validity(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Option<Vec<bool>>,
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 1,
                got: values.len(),
            });
        }
        if let Some(v) = &valid {
            if v.len() != values.len() {
                return Err(RasterError::BufferLength {
                    width,
                    height,
                    channels: 1,
                    got: v.len(),
                });
            }
        }
        for (i, &d) in values.iter().enumerate() {
            let is_valid = valid.as_ref().is_none_or(|v| v[i]);
            if is_valid && !(d.is_finite() && (0.0..1.0).contains(&d)) {
                return Err(RasterError::InvalidValue {
                    col: i % width,
                    row: i / width,
                    value: d,
                    reason: "disparity must be finite and in [0, 1)",
                });
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(col, row));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid
            .as_ref()
            .is_none_or(|v| v[row * self.width + col])
    }

    /// Value if the pixel is valid.
    #[inline]
    pub fn valid_value(&self, col: usize, row: usize) -> Option<f64> {
        self.is_valid(col, row).then(|| self.get(col, row))
    }

    /// Largest valid value, or 0 for an all-invalid map.
    pub fn max_valid(&self) -> f64 {
        let mut m = 0.0f64;
        for row in 0..self.height {
            for col in 0..self.width {
                if let Some(d) = self.valid_value(col, row) {
                    m = m.max(d);
                }
            }
        }
        m
    }

    pub fn window(&self, rect: Rect) -> Option<DisparityMap> {
        if !rect.fits_in(self.width, self.height) {
            return None;
        }
        let mut values = Vec::with_capacity(rect.area());
        let mut valid = self.valid.as_ref().map(|_| Vec::with_capacity(rect.area()));
        for row in rect.y0..rect.y1() {
            for col in rect.x0..rect.x1() {
                values.push(self.get(col, row));
                if let Some(v) = valid.as_mut() {
                    v.push(self.is_valid(col, row));
                }
            }
        }
        Some(DisparityMap {
            width: rect.width,
            height: rect.height,
            values,
            valid,
        })
    }
}

/// Metric depth raster in meters; invalid pixels carry no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Pixels with non-finite or non-positive depth are marked invalid.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 1,
                got: values.len(),
            });
        }
        let valid = values.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn valid_value(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.values[i])
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        Err(RasterError::EmptyDimensions { width, height })
    } else {
        Ok(())
    }
}
