//! Recognition probes: shadows, arbitrary shapes, partial sprites, flips and
//! context swaps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::CenteredCoord;
use crate::raster::{BitMask, ImageBuffer, Rect, Rgb};

use super::paste::{composite_sprite, PasteResult};
use super::{paste_object, ObjectCutout, PlacementMode, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Falloff {
    Constant,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowParams {
    pub darken_frac: f64,
    pub height_px: usize,
    pub falloff: Falloff,
}

impl Default for ShadowParams {
    fn default() -> Self {
        Self {
            darken_frac: 0.6,
            height_px: 8,
            falloff: Falloff::Linear,
        }
    }
}

/// Darken a strip of `height_px` rows directly below `contact_box`. Row `k`
/// of the strip (0 at the box edge) is scaled by `1 - darken * falloff(k)`.
/// The strip is clipped at the frame bottom.
pub fn add_shadow(
    image: &ImageBuffer,
    contact_box: Rect,
    params: ShadowParams,
) -> Result<ImageBuffer, SynthError> {
    if !(params.darken_frac >= 0.0 && params.darken_frac <= 1.0) {
        return Err(SynthError::Domain(format!(
            "darken_frac {} outside [0, 1]",
            params.darken_frac
        )));
    }
    if !contact_box.fits_in(image.width(), image.height()) {
        return Err(SynthError::Placement(format!(
            "shadow box {contact_box:?} outside {}x{} frame",
            image.width(),
            image.height()
        )));
    }
    let mut out = image.clone();
    let end = (contact_box.y1() + params.height_px).min(image.height());
    for row in contact_box.y1()..end {
        let k = (row - contact_box.y1()) as f64;
        let fall = match params.falloff {
            Falloff::Constant => 1.0,
            Falloff::Linear => 1.0 - k / params.height_px as f64,
        };
        let gain = 1.0 - params.darken_frac * fall;
        for col in contact_box.x0..contact_box.x1() {
            let p = image.get(col, row);
            out.set(col, row, Rgb(p.0.map(|v| (v as f64 * gain).floor() as u8)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeFill {
    Solid(Rgb),
    /// Sampled at the destination pixel, tiled.
    Texture(ImageBuffer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeResult {
    pub image: ImageBuffer,
    pub mask: BitMask,
    /// Lowest vertex of the polygon (largest `y`).
    pub ground_contact: CenteredCoord,
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    };
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Rasterize `polygon` (centered coordinates) with the even-odd rule at pixel
/// centers and composite `fill` inside it.
pub fn paste_shape(
    image: &ImageBuffer,
    polygon: &[CenteredCoord],
    fill: &ShapeFill,
) -> Result<ShapeResult, SynthError> {
    let (w, h) = (image.width(), image.height());
    if polygon.len() < 3 {
        return Err(SynthError::Domain("polygon needs at least 3 vertices".into()));
    }
    if polygon.iter().any(|p| !p.is_finite()) {
        return Err(SynthError::Domain("polygon has non-finite vertices".into()));
    }
    let pts: Vec<(f64, f64)> = polygon.iter().map(|p| p.to_pixel(w, h)).collect();
    let n = pts.len();
    let area2: f64 = (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    if area2.abs() < 1e-9 {
        return Err(SynthError::Domain("polygon has zero area".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return Err(SynthError::Domain("polygon is self-intersecting".into()));
            }
        }
    }
    if pts
        .iter()
        .any(|&(x, y)| x < -0.5 || y < -0.5 || x > w as f64 - 0.5 || y > h as f64 - 0.5)
    {
        return Err(SynthError::Placement("polygon extends outside the frame".into()));
    }
    if let ShapeFill::Texture(t) = fill {
        if t.width() == 0 || t.height() == 0 {
            return Err(SynthError::Domain("empty texture".into()));
        }
    }

    let mask = polygon_mask(&pts, w, h);
    let mut out = image.clone();
    for (col, row) in mask.iter_set() {
        let px = match fill {
            ShapeFill::Solid(c) => *c,
            ShapeFill::Texture(t) => t.get(col % t.width(), row % t.height()),
        };
        out.set(col, row, px);
    }
    let lowest = polygon
        .iter()
        .copied()
        .fold(polygon[0], |a, b| if b.y > a.y { b } else { a });
    Ok(ShapeResult {
        image: out,
        mask,
        ground_contact: lowest,
    })
}

/// Even-odd fill of a pixel-coordinate polygon, sampled at pixel centers.
pub(crate) fn polygon_mask(pts: &[(f64, f64)], w: usize, h: usize) -> BitMask {
    let n = pts.len();
    let mut mask = BitMask::new(w, h);
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let r0 = ymin.ceil().max(0.0) as usize;
    let r1 = (ymax.floor().min(h as f64 - 1.0)).max(-1.0);
    if r1 < 0.0 {
        return mask;
    }
    let mut xs = Vec::with_capacity(n);
    for row in r0..=r1 as usize {
        let y = row as f64;
        xs.clear();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            if (a.1 <= y && b.1 > y) || (b.1 <= y && a.1 > y) {
                xs.push(a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            let c0 = pair[0].ceil().max(0.0) as usize;
            let c1 = pair[1].floor();
            if c1 < 0.0 {
                continue;
            }
            for col in c0..=(c1 as usize).min(w - 1) {
                // half-open on the right edge
                if (col as f64) < pair[1] {
                    mask.set(col, row, true);
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgePart {
    Bottom,
    Left,
    Right,
    Top,
    Interior,
}

impl EdgePart {
    pub const ALL: [EdgePart; 5] = [
        EdgePart::Bottom,
        EdgePart::Left,
        EdgePart::Right,
        EdgePart::Top,
        EdgePart::Interior,
    ];
}

/// Part label for every alpha-support pixel of a sprite.
#[derive(Debug, Clone, PartialEq)]
pub struct PartLabels {
    pub width: usize,
    pub height: usize,
    labels: Vec<Option<EdgePart>>,
}

impl PartLabels {
    pub fn get(&self, col: usize, row: usize) -> Option<EdgePart> {
        self.labels[row * self.width + col]
    }

    pub fn mask_of(&self, keep: &BTreeSet<EdgePart>) -> BitMask {
        BitMask::from_fn(self.width, self.height, |c, r| {
            self.get(c, r).is_some_and(|p| keep.contains(&p))
        })
    }
}

/// Split the sprite silhouette into edge strips and interior. A pixel is
/// `Bottom` within `band_px` of its column's lowest opaque pixel, else `Top`
/// within `band_px` of the column's highest, else `Left`/`Right` relative to
/// its row's extent, else `Interior`.
pub fn sprite_parts(cutout: &ObjectCutout, band_px: usize) -> Result<PartLabels, SynthError> {
    let support = cutout.sprite.alpha_support();
    let bbox = support
        .bounding_box()
        .ok_or_else(|| SynthError::InvalidCutout("empty alpha support".into()))?;
    if band_px == 0 || band_px > bbox.width.min(bbox.height) {
        return Err(SynthError::Domain(format!(
            "band of {band_px} px does not fit a {}x{} sprite",
            bbox.width, bbox.height
        )));
    }
    let (w, h) = (support.width(), support.height());
    let mut col_ext = vec![(usize::MAX, 0usize); w];
    let mut row_ext = vec![(usize::MAX, 0usize); h];
    for (c, r) in support.iter_set() {
        col_ext[c] = (col_ext[c].0.min(r), col_ext[c].1.max(r));
        row_ext[r] = (row_ext[r].0.min(c), row_ext[r].1.max(c));
    }
    let mut labels = vec![None; w * h];
    for (c, r) in support.iter_set() {
        let (top, bottom) = col_ext[c];
        let (left, right) = row_ext[r];
        let part = if bottom - r < band_px {
            EdgePart::Bottom
        } else if r - top < band_px {
            EdgePart::Top
        } else if c - left < band_px {
            EdgePart::Left
        } else if right - c < band_px {
            EdgePart::Right
        } else {
            EdgePart::Interior
        };
        labels[r * w + c] = Some(part);
    }
    Ok(PartLabels {
        width: w,
        height: h,
        labels,
    })
}

/// Paste only the selected parts of the sprite at its original position and
/// scale.
pub fn edge_ablation(
    image: &ImageBuffer,
    cutout: &ObjectCutout,
    keep: &BTreeSet<EdgePart>,
    band_px: usize,
) -> Result<PasteResult, SynthError> {
    cutout.validate()?;
    if keep.is_empty() {
        return Err(SynthError::Domain("edge ablation keeps no parts".into()));
    }
    let parts = sprite_parts(cutout, band_px)?;
    let kept = parts.mask_of(keep);
    let sprite = cutout.sprite.masked(&kept);
    let measure = cutout.measure_mask.and(&kept);
    composite_sprite(
        image,
        &sprite,
        &measure,
        cutout.sprite_origin,
        cutout.ground_contact,
        cutout.ground_contact,
        1.0,
    )
}

pub fn flip_vertical(image: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (image.width(), image.height());
    ImageBuffer::from_fn(w, h, |c, r| image.get(c, h - 1 - r)).expect("same dimensions")
}

/// Paste the cutout at its original centered position and scale onto a
/// different background.
pub fn context_swap(
    cutout: &ObjectCutout,
    new_background: &ImageBuffer,
    slot: &str,
    horizon_y: f64,
) -> Result<PasteResult, SynthError> {
    if !cutout.has_slot(slot) {
        return Err(SynthError::Placement(format!(
            "slot '{slot}' is not among {:?} for {}",
            cutout.placement_slots, cutout.source_id
        )));
    }
    paste_object(
        new_background,
        cutout,
        PlacementMode::PositionAndScale,
        1.0,
        horizon_y,
    )
}
