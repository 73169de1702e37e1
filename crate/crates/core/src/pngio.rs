//! PNG reading and writing for the raster types.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

use crate::imgsynth::SemanticMap;
use crate::raster::{BitMask, ImageBuffer, RasterError, Rgb, RgbaImage};

#[derive(Debug, Error)]
pub enum PngError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Raster {
        path: PathBuf,
        #[source]
        source: RasterError,
    },
}

fn decode_err(path: &Path, e: impl std::fmt::Display) -> PngError {
    PngError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open_dynamic(path: &Path) -> Result<DynamicImage, PngError> {
    let file = File::open(path).map_err(|source| PngError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    image::load(BufReader::new(file), ImageFormat::Png).map_err(|e| decode_err(path, e))
}

fn save(path: &Path, img: DynamicImage) -> Result<(), PngError> {
    let file = File::create(path).map_err(|source| PngError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    img.write_to(&mut w, ImageFormat::Png)
        .map_err(|e| decode_err(path, e))
}

pub fn read_rgb(path: &Path) -> Result<ImageBuffer, PngError> {
    let img = open_dynamic(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    ImageBuffer::from_raw(w as usize, h as usize, img.into_raw()).map_err(|source| {
        PngError::Raster {
            path: path.to_path_buf(),
            source,
        }
    })
}

pub fn write_rgb(path: &Path, img: &ImageBuffer) -> Result<(), PngError> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.as_raw().to_vec())
        .expect("buffer length checked by ImageBuffer");
    save(path, DynamicImage::ImageRgb8(buf))
}

pub fn read_rgba(path: &Path) -> Result<RgbaImage, PngError> {
    let img = open_dynamic(path)?.into_rgba8();
    let (w, h) = img.dimensions();
    RgbaImage::from_raw(w as usize, h as usize, img.into_raw()).map_err(|source| PngError::Raster {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_rgba(path: &Path, img: &RgbaImage) -> Result<(), PngError> {
    let buf = image::RgbaImage::from_raw(img.width() as u32, img.height() as u32, img.as_raw().to_vec())
        .expect("buffer length checked by RgbaImage");
    save(path, DynamicImage::ImageRgba8(buf))
}

/// Any non-zero gray value is set.
pub fn read_mask(path: &Path) -> Result<BitMask, PngError> {
    let img = open_dynamic(path)?.into_luma8();
    let (w, h) = img.dimensions();
    BitMask::from_bits(w as usize, h as usize, img.into_raw().into_iter().map(|v| v > 0).collect())
        .map_err(|source| PngError::Raster {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_mask(path: &Path, mask: &BitMask) -> Result<(), PngError> {
    let raw = (0..mask.height())
        .flat_map(|r| (0..mask.width()).map(move |c| (r, c)))
        .map(|(r, c)| if mask.get(c, r) { 255u8 } else { 0 })
        .collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("mask dimensions");
    save(path, DynamicImage::ImageLuma8(buf))
}

/// 8-bit label image (one id per object, 0 = background).
pub fn read_labels_u8(path: &Path) -> Result<(usize, usize, Vec<u8>), PngError> {
    let img = open_dynamic(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

pub fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>), PngError> {
    let img = open_dynamic(path)?;
    let img = match img {
        DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(decode_err(
                path,
                format!("expected 16-bit grayscale, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

pub fn encode_gray16(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        width as u32,
        height as u32,
        data.to_vec(),
    )
    .expect("gray16 dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encode");
    out.into_inner()
}

pub fn write_gray16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<(), PngError> {
    std::fs::write(path, encode_gray16(width, height, data)).map_err(|source| PngError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Width, height, per-pixel labels and the palette.
pub type Indexed = (usize, usize, Vec<u16>, BTreeMap<u16, Rgb>);

/// Indexed PNG: palette indices become labels. Palette colors are returned
/// alongside, but a label table sidecar takes precedence when present.
pub fn read_indexed(path: &Path) -> Result<Indexed, PngError> {
    let file = File::open(path).map_err(|source| PngError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| decode_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let labels: Vec<u16> = match (info.color_type, info.bit_depth) {
        (png::ColorType::Indexed, png::BitDepth::Eight) | (png::ColorType::Grayscale, png::BitDepth::Eight) => {
            buf[..w * h].iter().map(|&v| v as u16).collect()
        }
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => buf[..w * h * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        (ct, bd) => {
            return Err(decode_err(
                path,
                format!("label image must be 8-bit indexed or gray, found {ct:?} {bd:?}"),
            ))
        }
    };
    let mut palette = BTreeMap::new();
    if let Some(p) = reader.info().palette.as_ref() {
        for (i, c) in p.chunks_exact(3).enumerate() {
            palette.insert(i as u16, Rgb([c[0], c[1], c[2]]));
        }
    }
    Ok((w, h, labels, palette))
}

/// Write labels (< 256) as an 8-bit indexed PNG with `palette`.
pub fn write_indexed(path: &Path, sem: &SemanticMap) -> Result<(), PngError> {
    let max_label = sem.labels.iter().copied().max().unwrap_or(0);
    if max_label > 255 {
        return Err(decode_err(path, "indexed PNG holds at most 256 labels"));
    }
    let mut pal = vec![0u8; (max_label as usize + 1) * 3];
    for (&l, c) in &sem.palette {
        if (l as usize) <= max_label as usize {
            pal[l as usize * 3..l as usize * 3 + 3].copy_from_slice(&c.0);
        }
    }
    let file = File::create(path).map_err(|source| PngError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), sem.width as u32, sem.height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(pal);
    let mut writer = enc.write_header().map_err(|e| decode_err(path, e))?;
    let data: Vec<u8> = sem.labels.iter().map(|&l| l as u8).collect();
    writer.write_image_data(&data).map_err(|e| decode_err(path, e))?;
    writer.finish().map_err(|e| decode_err(path, e))
}
