//! Bit-exact file formats of the exchange directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pngio::{self, PngError};
use crate::raster::{DisparityMap, ImageBuffer, RasterError};

use super::ModelioError;

pub const REQUEST_JSON: &str = "request.json";
pub const REQUEST_DONE: &str = "request.done";
pub const SHUTDOWN: &str = "shutdown";
pub const LEVELS: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispSidecar {
    pub d_max: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestImage {
    /// `<name>.png`, relative to the exchange directory.
    pub image: String,
    /// Stem of a reference disparity in wire format (`<stem>.disp.png` and
    /// `<stem>.disp.json`), for adapters that echo it back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestManifest {
    pub batch_id: String,
    pub images: Vec<RequestImage>,
}

impl RequestImage {
    /// The response stem: the image name without `.png`.
    pub fn stem(&self) -> &str {
        self.image.strip_suffix(".png").unwrap_or(&self.image)
    }
}

pub fn disp_png(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.disp.png"))
}

pub fn disp_json(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.disp.json"))
}

pub fn done_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.done"))
}

pub fn error_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.error"))
}

/// Quantize to 16 bits against the map's own maximum. Invalid pixels
/// encode as 0.
pub fn encode_disparity(map: &DisparityMap) -> (Vec<u16>, DispSidecar) {
    let d_max = map.max_valid();
    let (w, h) = (map.width(), map.height());
    let mut px = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let v = match map.valid_value(col, row) {
                Some(d) if d_max > 0.0 => (d / d_max * LEVELS).round().clamp(0.0, LEVELS) as u16,
                _ => 0,
            };
            px.push(v);
        }
    }
    (px, DispSidecar { d_max, width: w, height: h })
}

pub fn decode_disparity(pixels: &[u16], sidecar: &DispSidecar) -> Result<DisparityMap, RasterError> {
    let values = pixels.iter().map(|&p| p as f64 / LEVELS * sidecar.d_max).collect();
    DisparityMap::new(sidecar.width, sidecar.height, values)
}

fn png_err(e: PngError) -> ModelioError {
    match e {
        PngError::Io { path, source } => ModelioError::io(path, source),
        PngError::Decode { path, message } => ModelioError::protocol(path, message),
        PngError::Raster { path, source } => ModelioError::protocol(path, source.to_string()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ModelioError> {
    std::fs::write(path, bytes).map_err(|e| ModelioError::io(path, e))
}

pub fn sidecar_bytes(sidecar: &DispSidecar) -> Vec<u8> {
    serde_json::to_vec(sidecar).expect("sidecar serializes")
}

/// Write `<stem>.disp.png` and `<stem>.disp.json`.
pub fn write_disparity(dir: &Path, stem: &str, map: &DisparityMap) -> Result<(), ModelioError> {
    let (px, side) = encode_disparity(map);
    pngio::write_gray16(&disp_png(dir, stem), side.width, side.height, &px).map_err(png_err)?;
    write_bytes(&disp_json(dir, stem), &sidecar_bytes(&side))
}

/// Validate and decode one response. `expected` pins the dimensions.
pub fn check_response(
    dir: &Path,
    stem: &str,
    expected: Option<(usize, usize)>,
) -> Result<DisparityMap, ModelioError> {
    let json_path = disp_json(dir, stem);
    let text = std::fs::read(&json_path).map_err(|e| ModelioError::protocol(&json_path, format!("unreadable sidecar: {e}")))?;
    let side: DispSidecar = serde_json::from_slice(&text)
        .map_err(|e| ModelioError::protocol(&json_path, format!("malformed sidecar: {e}")))?;
    if !(side.d_max.is_finite() && (0.0..1.0).contains(&side.d_max)) {
        return Err(ModelioError::protocol(
            &json_path,
            format!("d_max {} outside [0, 1)", side.d_max),
        ));
    }
    let png_path = disp_png(dir, stem);
    let (w, h, px) = pngio::read_gray16(&png_path).map_err(|e| match e {
        PngError::Io { source, .. } => ModelioError::protocol(&png_path, format!("unreadable: {source}")),
        other => png_err(other),
    })?;
    if (w, h) != (side.width, side.height) {
        return Err(ModelioError::protocol(
            &png_path,
            format!("image is {w}x{h} but sidecar says {}x{}", side.width, side.height),
        ));
    }
    if let Some((ew, eh)) = expected {
        if (w, h) != (ew, eh) {
            return Err(ModelioError::protocol(
                &png_path,
                format!("response is {w}x{h}, request image was {ew}x{eh}"),
            ));
        }
    }
    decode_disparity(&px, &side).map_err(|e| ModelioError::protocol(&png_path, e.to_string()))
}

pub fn write_request(
    dir: &Path,
    manifest: &RequestManifest,
    images: &[&ImageBuffer],
) -> Result<(), ModelioError> {
    if manifest.images.len() != images.len() {
        return Err(ModelioError::Config("manifest and image counts differ".into()));
    }
    for (entry, img) in manifest.images.iter().zip(images) {
        pngio::write_rgb(&dir.join(&entry.image), img).map_err(png_err)?;
    }
    let path = dir.join(REQUEST_JSON);
    write_bytes(&path, &serde_json::to_vec_pretty(manifest).expect("manifest serializes"))?;
    write_bytes(&dir.join(REQUEST_DONE), b"")
}

pub fn read_request(dir: &Path) -> Result<RequestManifest, ModelioError> {
    let path = dir.join(REQUEST_JSON);
    let text = std::fs::read(&path).map_err(|e| ModelioError::io(&path, e))?;
    let m: RequestManifest =
        serde_json::from_slice(&text).map_err(|e| ModelioError::protocol(&path, format!("malformed request: {e}")))?;
    for entry in &m.images {
        let bad = |s: &str| s.is_empty() || s.contains(['/', '\\']) || s.starts_with('.');
        if bad(&entry.image) || !entry.image.ends_with(".png") || entry.reference.as_deref().is_some_and(bad) {
            return Err(ModelioError::protocol(&path, format!("bad image entry {entry:?}")));
        }
    }
    Ok(m)
}
