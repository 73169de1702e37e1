use std::collections::BTreeMap;

use crate::raster::{ImageBuffer, RasterError, Rgb};

use super::{ClassColors, PhotometricMode, SynthError};

/// Per-pixel class labels plus the label -> display color table.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
    pub palette: BTreeMap<u16, Rgb>,
}

impl SemanticMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u16>,
        palette: BTreeMap<u16, Rgb>,
    ) -> Result<Self, RasterError> {
        if labels.len() != width * height {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: 1,
                got: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            palette,
        })
    }

    #[inline]
    pub fn label(&self, col: usize, row: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    fn color(&self, label: u16) -> Result<Rgb, SynthError> {
        self.palette
            .get(&label)
            .copied()
            .ok_or_else(|| SynthError::Config(format!("label {label} has no palette color")))
    }
}

/// HSV with hue in `[0, 6)` sextants, saturation in `[0, 1]`, value 0..=255.
pub fn rgb_to_hsv(px: Rgb) -> (f64, f64, u8) {
    let [r, g, b] = px.0.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let v = px.0.into_iter().max().unwrap_or(0);
    if c == 0.0 {
        return (0.0, 0.0, v);
    }
    let h = if max == r {
        ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        (b - r) / c + 2.0
    } else {
        (r - g) / c + 4.0
    };
    (h, c / max, v)
}

/// Inverse of [`rgb_to_hsv`]. The largest output channel equals `v` exactly.
pub fn hsv_to_rgb(h: f64, s: f64, v: u8) -> Rgb {
    let vf = v as f64;
    let s = s.clamp(0.0, 1.0);
    let h = h.rem_euclid(6.0);
    let sector = h.floor() as u8 % 6;
    let f = h - h.floor();
    let q8 = |x: f64| x.round().clamp(0.0, vf) as u8;
    let p = q8(vf * (1.0 - s));
    let q = q8(vf * (1.0 - s * f));
    let t = q8(vf * (1.0 - s * (1.0 - f)));
    Rgb(match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    })
}

fn luminance(px: Rgb) -> u8 {
    let [r, g, b] = px.0.map(u32::from);
    // Rec. 601 weights in integer form; exact on gray input
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

fn check_aligned(image: &ImageBuffer, sem: &SemanticMap) -> Result<(), SynthError> {
    if sem.width != image.width() || sem.height != image.height() {
        return Err(SynthError::Config(format!(
            "semantic map is {}x{}, image is {}x{}",
            sem.width,
            sem.height,
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

pub fn apply_photometric(
    image: &ImageBuffer,
    mode: PhotometricMode,
    semantic: Option<&SemanticMap>,
    class_colors: Option<&ClassColors>,
) -> Result<ImageBuffer, SynthError> {
    let need_sem = || {
        semantic.ok_or_else(|| SynthError::Config(format!("{mode} requires a semantic map")))
    };
    let (w, h) = (image.width(), image.height());
    match mode {
        PhotometricMode::Unmodified => Ok(image.clone()),
        PhotometricMode::Grayscale => Ok(ImageBuffer::from_fn(w, h, |c, r| {
            let y = luminance(image.get(c, r));
            Rgb([y, y, y])
        })?),
        PhotometricMode::FalseColors => {
            let sem = need_sem()?;
            check_aligned(image, sem)?;
            let mut out = image.clone();
            for row in 0..h {
                for col in 0..w {
                    let (hue, sat, _) = rgb_to_hsv(sem.color(sem.label(col, row))?);
                    let (_, _, v) = rgb_to_hsv(image.get(col, row));
                    out.set(col, row, hsv_to_rgb(hue, sat, v));
                }
            }
            Ok(out)
        }
        PhotometricMode::SemanticRgb => {
            let sem = need_sem()?;
            check_aligned(image, sem)?;
            let mut out = image.clone();
            for row in 0..h {
                for col in 0..w {
                    out.set(col, row, sem.color(sem.label(col, row))?);
                }
            }
            Ok(out)
        }
        PhotometricMode::ClassAverageColors => {
            let sem = need_sem()?;
            check_aligned(image, sem)?;
            let colors = class_colors.ok_or_else(|| {
                SynthError::Config(format!("{mode} requires a class color table"))
            })?;
            let mut out = image.clone();
            for row in 0..h {
                for col in 0..w {
                    let label = sem.label(col, row);
                    let c = colors.get(&label).copied().ok_or_else(|| {
                        SynthError::Config(format!("label {label} missing from class color table"))
                    })?;
                    out.set(col, row, c);
                }
            }
            Ok(out)
        }
    }
}

/// Mean color of each label over a set of aligned image/label pairs.
pub fn class_mean_colors<'a>(
    pairs: impl IntoIterator<Item = (&'a ImageBuffer, &'a SemanticMap)>,
) -> Result<ClassColors, SynthError> {
    let mut sums: BTreeMap<u16, ([u64; 3], u64)> = BTreeMap::new();
    for (image, sem) in pairs {
        check_aligned(image, sem)?;
        for row in 0..image.height() {
            for col in 0..image.width() {
                let e = sums.entry(sem.label(col, row)).or_default();
                let p = image.get(col, row);
                for k in 0..3 {
                    e.0[k] += p.0[k] as u64;
                }
                e.1 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(label, (s, n))| {
            let mean = s.map(|v| ((v as f64) / n as f64).round() as u8);
            (label, Rgb(mean))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker(w: usize, h: usize) -> (ImageBuffer, SemanticMap) {
        let labels: Vec<u16> = (0..w * h).map(|i| (((i % w) + (i / w)) % 2) as u16).collect();
        let img = ImageBuffer::from_fn(w, h, |c, r| {
            let k = (c * 7 + r * 13) as u8;
            if (c + r) % 2 == 0 { Rgb([200, 10 + k % 20, 30]) } else { Rgb([5, 100, 150 + k % 40]) }
        })
        .unwrap();
        let palette = BTreeMap::from([(0, Rgb([128, 64, 128])), (1, Rgb([70, 130, 180]))]);
        (img, SemanticMap::new(w, h, labels, palette).unwrap())
    }

    #[test]
    fn grayscale_is_idempotent_on_gray() {
        let img = ImageBuffer::from_fn(16, 16, |c, r| {
            let v = (c * 16 + r) as u8;
            Rgb([v, v, v])
        })
        .unwrap();
        let out = apply_photometric(&img, PhotometricMode::Grayscale, None, None).unwrap();
        assert_eq!(out, img);
        let twice = apply_photometric(&out, PhotometricMode::Grayscale, None, None).unwrap();
        assert_eq!(twice, out);
    }

    #[test]
    fn false_colors_keep_value_channel() {
        let (img, sem) = checker(12, 9);
        let out = apply_photometric(&img, PhotometricMode::FalseColors, Some(&sem), None).unwrap();
        for (a, b) in img.pixels().zip(out.pixels()) {
            assert_eq!(a.0.iter().max(), b.0.iter().max());
        }
    }

    #[test]
    fn class_average_checkerboard() {
        let (img, sem) = checker(10, 10);
        // brute-force means over each class
        let mut acc = [[0u64; 4]; 2];
        for r in 0..10 {
            for c in 0..10 {
                let l = sem.label(c, r) as usize;
                let p = img.get(c, r);
                for (a, &v) in acc[l].iter_mut().zip(&p.0) {
                    *a += v as u64;
                }
                acc[l][3] += 1;
            }
        }
        let expect = |l: usize| Rgb([0, 1, 2].map(|k| (acc[l][k] as f64 / acc[l][3] as f64).round() as u8));
        let colors = class_mean_colors([(&img, &sem)]).unwrap();
        assert_eq!(colors[&0], expect(0));
        assert_eq!(colors[&1], expect(1));
        let out = apply_photometric(&img, PhotometricMode::ClassAverageColors, Some(&sem), Some(&colors)).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(out.get(c, r), expect(sem.label(c, r) as usize));
            }
        }
    }

    #[test]
    fn semantic_rgb_is_palette() {
        let (img, sem) = checker(6, 4);
        let out = apply_photometric(&img, PhotometricMode::SemanticRgb, Some(&sem), None).unwrap();
        assert_eq!(out.get(0, 0), Rgb([128, 64, 128]));
        assert_eq!(out.get(1, 0), Rgb([70, 130, 180]));
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let (img, sem) = checker(4, 4);
        for mode in [PhotometricMode::FalseColors, PhotometricMode::SemanticRgb, PhotometricMode::ClassAverageColors] {
            assert!(matches!(apply_photometric(&img, mode, None, None), Err(SynthError::Config(_))));
        }
        assert!(matches!(
            apply_photometric(&img, PhotometricMode::ClassAverageColors, Some(&sem), None),
            Err(SynthError::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn hsv_round_trip_is_close(r: u8, g: u8, b: u8) {
            let (h, s, v) = rgb_to_hsv(Rgb([r, g, b]));
            let back = hsv_to_rgb(h, s, v);
            for k in 0..3 {
                prop_assert!((back.0[k] as i32 - [r, g, b][k] as i32).abs() <= 1);
            }
            prop_assert_eq!(*back.0.iter().max().unwrap(), v);
        }
    }
}
