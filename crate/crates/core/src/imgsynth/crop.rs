//! Pitch and roll emulation by cropping shifted or tilted windows.
//!
//! Window sizes are derived from the source size and the fractions only, and
//! always have the same parity as the source so the window center lands on
//! the pixel grid. A window's centered coordinates therefore differ from the
//! source's by exactly the offset (pitch) or a rotation (roll).

use serde::{Deserialize, Serialize};

use crate::geometry::frame_center;
use crate::raster::{BitMask, DisparityMap, ImageBuffer, Rect, Rgb};

use super::SynthError;

/// Window size as fractions of the source frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub h_frac: f64,
    pub w_frac: f64,
}

impl CropParams {
    /// Pitch sweep default: leaves +-30 px of travel in a 375-row frame.
    pub const PITCH: CropParams = CropParams {
        h_frac: 0.80,
        w_frac: 0.95,
    };
    /// Roll sweep default: the window stays inside a 1242x375 frame up to 5 degrees.
    pub const ROLL: CropParams = CropParams {
        h_frac: 0.75,
        w_frac: 0.60,
    };
}

fn parity_matched(src: usize, frac: f64) -> usize {
    let mut n = (src as f64 * frac).round() as usize;
    n = n.min(src);
    if (src - n) % 2 == 1 {
        n -= 1;
    }
    n
}

/// `(width, height)` of a crop window for a `src_w x src_h` source.
pub fn crop_dims(src_w: usize, src_h: usize, params: CropParams) -> Result<(usize, usize), SynthError> {
    if !(params.h_frac > 0.0 && params.h_frac <= 1.0 && params.w_frac > 0.0 && params.w_frac <= 1.0) {
        return Err(SynthError::Domain(format!(
            "crop fractions must be in (0, 1], got {params:?}"
        )));
    }
    let w = parity_matched(src_w, params.w_frac);
    let h = parity_matched(src_h, params.h_frac);
    if w == 0 || h == 0 {
        return Err(SynthError::Domain(format!(
            "crop of {src_w}x{src_h} with {params:?} is empty"
        )));
    }
    Ok((w, h))
}

/// Window whose vertical center sits `offset_px` below the source center.
pub fn pitch_window(
    src_w: usize,
    src_h: usize,
    offset_px: i64,
    params: CropParams,
) -> Result<Rect, SynthError> {
    let (w, h) = crop_dims(src_w, src_h, params)?;
    let y0 = ((src_h - h) / 2) as i64 + offset_px;
    if y0 < 0 || y0 as usize + h > src_h {
        return Err(SynthError::Crop {
            what: format!("{w}x{h} at offset {offset_px}"),
            width: src_w,
            height: src_h,
        });
    }
    Ok(Rect::new((src_w - w) / 2, y0 as usize, w, h))
}

pub fn crop_pitch(image: &ImageBuffer, offset_px: i64, params: CropParams) -> Result<ImageBuffer, SynthError> {
    let rect = pitch_window(image.width(), image.height(), offset_px, params)?;
    Ok(image.window(rect).expect("window checked"))
}

pub fn crop_pitch_map(map: &DisparityMap, offset_px: i64, params: CropParams) -> Result<DisparityMap, SynthError> {
    let rect = pitch_window(map.width(), map.height(), offset_px, params)?;
    Ok(map.window(rect).expect("window checked"))
}

pub fn crop_pitch_mask(mask: &BitMask, offset_px: i64, params: CropParams) -> Result<BitMask, SynthError> {
    let rect = pitch_window(mask.width(), mask.height(), offset_px, params)?;
    Ok(mask.window(rect).expect("window checked"))
}

/// Maps crop pixels to source pixel coordinates for a window rotated by
/// `angle_deg` about the source center.
struct RollSampler {
    w: usize,
    h: usize,
    sin: f64,
    cos: f64,
    src_c: (f64, f64),
    dst_c: (f64, f64),
}

impl RollSampler {
    fn new(src_w: usize, src_h: usize, angle_deg: f64, params: CropParams) -> Result<Self, SynthError> {
        if !angle_deg.is_finite() || angle_deg.abs() > 45.0 {
            return Err(SynthError::Domain(format!("roll angle {angle_deg} out of range")));
        }
        let (w, h) = crop_dims(src_w, src_h, params)?;
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let s = Self {
            w,
            h,
            sin,
            cos,
            src_c: frame_center(src_w, src_h),
            dst_c: frame_center(w, h),
        };
        for (u, v) in [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)] {
            let (x, y) = s.source(u, v);
            let eps = 1e-9;
            if x < -eps || y < -eps || x > (src_w - 1) as f64 + eps || y > (src_h - 1) as f64 + eps {
                return Err(SynthError::Crop {
                    what: format!("{w}x{h} rotated by {angle_deg} deg"),
                    width: src_w,
                    height: src_h,
                });
            }
        }
        Ok(s)
    }

    #[inline]
    fn source(&self, col: usize, row: usize) -> (f64, f64) {
        let u = col as f64 - self.dst_c.0;
        let v = row as f64 - self.dst_c.1;
        (
            self.cos * u - self.sin * v + self.src_c.0,
            self.sin * u + self.cos * v + self.src_c.1,
        )
    }
}

/// Bilinear weights for `(x, y)` clamped to the source grid.
#[inline]
fn bilinear(x: f64, y: f64, w: usize, h: usize) -> [(usize, usize, f64); 4] {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ]
}

/// Window rotated by `angle_deg` about the image center, bilinearly sampled.
/// A horizontal line in the source appears at `-angle_deg` in the crop.
pub fn crop_roll(image: &ImageBuffer, angle_deg: f64, params: CropParams) -> Result<ImageBuffer, SynthError> {
    let s = RollSampler::new(image.width(), image.height(), angle_deg, params)?;
    let (sw, sh) = (image.width(), image.height());
    Ok(ImageBuffer::from_fn(s.w, s.h, |col, row| {
        let (x, y) = s.source(col, row);
        let mut acc = [0.0f64; 3];
        for (xi, yi, wgt) in bilinear(x, y, sw, sh) {
            if wgt == 0.0 {
                continue;
            }
            let p = image.get(xi, yi);
            for (a, &v) in acc.iter_mut().zip(&p.0) {
                *a += wgt * v as f64;
            }
        }
        Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })?)
}

/// Rotated window of a disparity map; invalid source pixels propagate.
pub fn crop_roll_map(map: &DisparityMap, angle_deg: f64, params: CropParams) -> Result<DisparityMap, SynthError> {
    let s = RollSampler::new(map.width(), map.height(), angle_deg, params)?;
    let (sw, sh) = (map.width(), map.height());
    let mut values = Vec::with_capacity(s.w * s.h);
    let mut valid = Vec::with_capacity(s.w * s.h);
    for row in 0..s.h {
        for col in 0..s.w {
            let (x, y) = s.source(col, row);
            let mut acc = 0.0;
            let mut ok = true;
            for (xi, yi, wgt) in bilinear(x, y, sw, sh) {
                if wgt == 0.0 {
                    continue;
                }
                match map.valid_value(xi, yi) {
                    Some(d) => acc += wgt * d,
                    None => ok = false,
                }
            }
            values.push(if ok { acc } else { 0.0 });
            valid.push(ok);
        }
    }
    let valid = if valid.iter().all(|&v| v) { None } else { Some(valid) };
    Ok(DisparityMap::with_validity(s.w, s.h, values, valid)?)
}

/// Rotated window of a mask, nearest-neighbor sampled.
pub fn crop_roll_mask(mask: &BitMask, angle_deg: f64, params: CropParams) -> Result<BitMask, SynthError> {
    let s = RollSampler::new(mask.width(), mask.height(), angle_deg, params)?;
    Ok(BitMask::from_fn(s.w, s.h, |col, row| {
        let (x, y) = s.source(col, row);
        let xi = (x + 0.5).floor().clamp(0.0, (mask.width() - 1) as f64) as usize;
        let yi = (y + 0.5).floor().clamp(0.0, (mask.height() - 1) as f64) as usize;
        mask.get(xi, yi)
    }))
}
