use crate::geometry::{place_at_relative_distance, CenteredCoord};
use crate::raster::{BitMask, ImageBuffer, Rgb, RgbaImage};

use super::{ObjectCutout, PlacementMode, SynthError};

/// Output of [`paste_object`]. Masks are aligned to `image`.
#[derive(Debug, Clone, PartialEq)]
pub struct PasteResult {
    pub image: ImageBuffer,
    pub measure_mask: BitMask,
    /// Pixels where the composited sprite has alpha of at least one half.
    pub footprint: BitMask,
    /// Ground contact actually used, after snapping to the pixel grid.
    pub contact: CenteredCoord,
    pub scale: f64,
}

/// Snap a centered coordinate to the pixel grid of a `width x height` frame.
/// Ties round toward larger rows (downward), so a contact on a half row is
/// placed on the lower one.
pub fn round_contact(c: CenteredCoord, width: usize, height: usize) -> CenteredCoord {
    let (col, row) = c.to_pixel(width, height);
    CenteredCoord::from_pixel((col + 0.5).floor(), (row + 0.5).floor(), width, height)
}

/// Composite `cutout` into `background` at relative distance `rel_dist`.
///
/// `PositionAndScale` applies both the scaling and the contact-point shift,
/// `PositionOnly` keeps the sprite at scale 1 and `ScaleOnly` keeps the
/// contact point where it was cropped. Scaling is about the contact point
/// with bilinear resampling of premultiplied RGBA.
pub fn paste_object(
    background: &ImageBuffer,
    cutout: &ObjectCutout,
    mode: PlacementMode,
    rel_dist: f64,
    horizon_y: f64,
) -> Result<PasteResult, SynthError> {
    cutout.validate()?;
    let placed = place_at_relative_distance(cutout.ground_contact, horizon_y, rel_dist)?;
    let (scale, target) = match mode {
        PlacementMode::PositionAndScale => (placed.scale, placed.contact),
        PlacementMode::PositionOnly => (1.0, placed.contact),
        PlacementMode::ScaleOnly => (placed.scale, cutout.ground_contact),
    };
    composite_sprite(
        background,
        &cutout.sprite,
        &cutout.measure_mask,
        cutout.sprite_origin,
        cutout.ground_contact,
        target,
        scale,
    )
}

pub(crate) fn composite_sprite(
    background: &ImageBuffer,
    sprite: &RgbaImage,
    measure_mask: &BitMask,
    sprite_origin: CenteredCoord,
    src_contact: CenteredCoord,
    target_contact: CenteredCoord,
    scale: f64,
) -> Result<PasteResult, SynthError> {
    let (w, h) = (background.width(), background.height());
    let bbox = sprite
        .alpha_support()
        .bounding_box()
        .ok_or_else(|| SynthError::InvalidCutout("empty alpha support".into()))?;
    let target = round_contact(target_contact, w, h);

    // sprite pixel (i, j) -> centered source -> scaled about the contact
    let (tx, ty) = target.to_pixel(w, h);
    let ox = sprite_origin.x - src_contact.x;
    let oy = sprite_origin.y - src_contact.y;
    let fwd = |i: f64, j: f64| (tx + scale * (ox + i), ty + scale * (oy + j));

    let (ax, ay) = fwd(bbox.x0 as f64 - 0.5, bbox.y0 as f64 - 0.5);
    let (bx, by) = fwd(bbox.x1() as f64 - 0.5, bbox.y1() as f64 - 0.5);
    if ax < -0.5 || ay < -0.5 || bx > w as f64 - 0.5 || by > h as f64 - 0.5 {
        return Err(SynthError::Placement(format!(
            "sprite spans columns {ax:.1}..{bx:.1}, rows {ay:.1}..{by:.1}; frame is {w}x{h}"
        )));
    }

    let mut image = background.clone();
    let mut measure = BitMask::new(w, h);
    let mut footprint = BitMask::new(w, h);
    let c0 = ax.floor().max(0.0) as usize;
    let c1 = (bx.ceil() as usize).min(w - 1);
    let r0 = ay.floor().max(0.0) as usize;
    let r1 = (by.ceil() as usize).min(h - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let si = (col as f64 - tx) / scale - ox;
            let sj = (row as f64 - ty) / scale - oy;
            let (premul, alpha) = sample_premultiplied(sprite, si, sj);
            if alpha <= 0.0 {
                continue;
            }
            let bg = background.get(col, row);
            let a = alpha / 255.0;
            let mut out = [0u8; 3];
            for k in 0..3 {
                let v = premul[k] + (1.0 - a) * bg.0[k] as f64;
                out[k] = v.round().clamp(0.0, 255.0) as u8;
            }
            image.set(col, row, Rgb(out));
            if alpha >= 127.5 {
                footprint.set(col, row, true);
                let (ni, nj) = ((si + 0.5).floor(), (sj + 0.5).floor());
                if ni >= 0.0
                    && nj >= 0.0
                    && (ni as usize) < sprite.width()
                    && (nj as usize) < sprite.height()
                    && measure_mask.get(ni as usize, nj as usize)
                {
                    measure.set(col, row, true);
                }
            }
        }
    }
    Ok(PasteResult {
        image,
        measure_mask: measure,
        footprint,
        contact: target,
        scale,
    })
}

/// Bilinear sample returning premultiplied color (0..255 scale) and alpha.
/// Outside the sprite everything is transparent.
fn sample_premultiplied(sprite: &RgbaImage, x: f64, y: f64) -> ([f64; 3], f64) {
    let (sw, sh) = (sprite.width() as isize, sprite.height() as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let mut col = [0.0f64; 3];
    let mut alpha = 0.0;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if wgt == 0.0 {
            continue;
        }
        let (xi, yi) = (x0 + dx, y0 + dy);
        if xi < 0 || yi < 0 || xi >= sw || yi >= sh {
            continue;
        }
        let p = sprite.get(xi as usize, yi as usize);
        let a = p[3] as f64;
        for k in 0..3 {
            col[k] += wgt * p[k] as f64 * a / 255.0;
        }
        alpha += wgt * a;
    }
    (col, alpha)
}
