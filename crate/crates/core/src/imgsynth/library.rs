//! On-disk cutout library and semantic maps.
//!
//! A cutout is `<name>.json` next to its RGBA sprite and measurement mask:
//!
//! ```json
//! {
//!   "source_id": "000042",
//!   "class_label": "car",
//!   "sprite": "car_000042.png",
//!   "measure_mask": "car_000042.mask.png",
//!   "sprite_origin": {"x": -120.0, "y": 40.0},
//!   "ground_contact": {"x": -95.0, "y": 71.0},
//!   "placement_slots": ["left-lane"]
//! }
//! ```
//!
//! Semantic maps are indexed PNGs with an optional label table
//! `{"<label>": {"name": "road", "color": [128, 64, 128]}}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CenteredCoord;
use crate::pngio::{self, PngError};
use crate::raster::Rgb;

use super::{ObjectCutout, SemanticMap, SynthError};

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Png(#[from] PngError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: SynthError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoutSidecar {
    pub source_id: String,
    pub class_label: String,
    pub sprite: String,
    pub measure_mask: String,
    pub sprite_origin: CenteredCoord,
    pub ground_contact: CenteredCoord,
    #[serde(default)]
    pub placement_slots: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LibraryError> {
    let text = std::fs::read_to_string(path).map_err(|source| LibraryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| LibraryError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LibraryError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|source| LibraryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_cutout(sidecar_path: &Path) -> Result<ObjectCutout, LibraryError> {
    let meta: CutoutSidecar = read_json(sidecar_path)?;
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let sprite = pngio::read_rgba(&dir.join(&meta.sprite))?;
    let measure_mask = pngio::read_mask(&dir.join(&meta.measure_mask))?;
    let cutout = ObjectCutout {
        sprite,
        sprite_origin: meta.sprite_origin,
        ground_contact: meta.ground_contact,
        source_id: meta.source_id,
        class_label: meta.class_label,
        placement_slots: meta.placement_slots,
        measure_mask,
    };
    cutout.validate().map_err(|source| LibraryError::Invalid {
        path: sidecar_path.to_path_buf(),
        source,
    })?;
    Ok(cutout)
}

/// Write sprite, mask and sidecar into `dir` under `name`.
pub fn save_cutout(dir: &Path, name: &str, cutout: &ObjectCutout) -> Result<PathBuf, LibraryError> {
    let sprite = format!("{name}.png");
    let mask = format!("{name}.mask.png");
    pngio::write_rgba(&dir.join(&sprite), &cutout.sprite)?;
    pngio::write_mask(&dir.join(&mask), &cutout.measure_mask)?;
    let meta = CutoutSidecar {
        source_id: cutout.source_id.clone(),
        class_label: cutout.class_label.clone(),
        sprite,
        measure_mask: mask,
        sprite_origin: cutout.sprite_origin,
        ground_contact: cutout.ground_contact,
        placement_slots: cutout.placement_slots.clone(),
    };
    let path = dir.join(format!("{name}.json"));
    write_json(&path, &meta)?;
    Ok(path)
}

/// Every `*.json` sidecar in `dir`, sorted by file name.
pub fn load_cutout_dir(dir: &Path) -> Result<Vec<ObjectCutout>, LibraryError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| LibraryError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_cutout(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub name: String,
    pub color: [u8; 3],
}

/// Label table keyed by the decimal label id.
pub type LabelTable = BTreeMap<String, LabelEntry>;

/// Load an indexed semantic PNG; `table`, when given, overrides palette colors.
pub fn load_semantic(png_path: &Path, table: Option<&Path>) -> Result<SemanticMap, LibraryError> {
    let (w, h, labels, mut palette) = pngio::read_indexed(png_path)?;
    if let Some(t) = table {
        let table: LabelTable = read_json(t)?;
        for (k, entry) in table {
            if let Ok(id) = k.parse::<u16>() {
                palette.insert(id, Rgb(entry.color));
            }
        }
    }
    SemanticMap::new(w, h, labels, palette).map_err(|e| LibraryError::Invalid {
        path: png_path.to_path_buf(),
        source: SynthError::Raster(e),
    })
}

pub fn save_semantic(
    png_path: &Path,
    table_path: &Path,
    sem: &SemanticMap,
    names: &BTreeMap<u16, String>,
) -> Result<(), LibraryError> {
    pngio::write_indexed(png_path, sem)?;
    let table: LabelTable = sem
        .palette
        .iter()
        .map(|(id, c)| {
            (
                id.to_string(),
                LabelEntry {
                    name: names.get(id).cloned().unwrap_or_else(|| format!("class{id}")),
                    color: c.0,
                },
            )
        })
        .collect();
    write_json(table_path, &table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BitMask, RgbaImage};

    #[test]
    fn cutout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cut = ObjectCutout {
            sprite: RgbaImage::from_fn(8, 6, |c, _| [c as u8 * 20, 3, 4, 255]).unwrap(),
            sprite_origin: CenteredCoord::new(-4.0, 10.0),
            ground_contact: CenteredCoord::new(0.0, 15.0),
            source_id: "s1".into(),
            class_label: "car".into(),
            placement_slots: vec!["a".into(), "b".into()],
            measure_mask: BitMask::from_fn(8, 6, |c, r| c > 2 && r == 3),
        };
        let p = save_cutout(dir.path(), "car0", &cut).unwrap();
        assert_eq!(load_cutout(&p).unwrap(), cut);
        assert_eq!(load_cutout_dir(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn sidecar_with_bad_contact_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cut = ObjectCutout {
            sprite: RgbaImage::from_fn(8, 6, |_, _| [1, 2, 3, 255]).unwrap(),
            sprite_origin: CenteredCoord::new(0.0, 0.0),
            ground_contact: CenteredCoord::new(4.0, 5.0),
            source_id: "s".into(),
            class_label: "car".into(),
            placement_slots: vec![],
            measure_mask: BitMask::new(8, 6),
        };
        save_cutout(dir.path(), "ok", &cut).unwrap();
        cut.ground_contact.y = 0.0;
        let p = save_cutout(dir.path(), "bad", &cut).unwrap();
        assert!(matches!(load_cutout(&p), Err(LibraryError::Invalid { .. })));
    }
}
