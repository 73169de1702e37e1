//! On-disk dataset layout. Every file is keyed by an image id, the stem of
//! a PNG in `images_dir`:
//!
//! * `images/<id>.png` RGB frames;
//! * `cutouts/*.json` cutout sidecars with their sprites and masks;
//! * `semantic/<id>.png` indexed label maps, `semantic/labels.json` table;
//! * `gt/<id>.json` scene truth `{"horizon_y", "roll_deg"}`,
//!   `gt/<id>.disp.png` + `.disp.json` normalized disparity or
//!   `gt/<id>.depth.png` 16-bit depth in 1/256 m;
//! * `obstacles/<id>/<k>.png` one mask per obstacle.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imgsynth::library::{load_cutout_dir, load_semantic};
use crate::imgsynth::{ObjectCutout, SemanticMap};
use crate::metrics::GtKind;
use crate::modelio::wire;
use crate::pngio;
use crate::raster::{BitMask, DepthMap, DisparityMap, ImageBuffer};

use super::RunnerError;

pub const DATASET_ENV: &str = "DEPTHCUE_DATASET";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub images_dir: PathBuf,
    pub cutouts_dir: PathBuf,
    pub semantic_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub obstacles_dir: Option<PathBuf>,
}

impl DatasetLayout {
    /// The conventional layout under `root`; optional directories are only
    /// set when they exist.
    pub fn from_root(root: &Path) -> Self {
        let opt = |name: &str| {
            let p = root.join(name);
            p.is_dir().then_some(p)
        };
        Self {
            images_dir: root.join("images"),
            cutouts_dir: root.join("cutouts"),
            semantic_dir: opt("semantic"),
            gt_dir: opt("gt"),
            obstacles_dir: opt("obstacles"),
        }
    }
}

/// Known geometry of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub horizon_y: f64,
    #[serde(default)]
    pub roll_deg: f64,
}

/// Ground truth for the metric suite.
#[derive(Debug, Clone, PartialEq)]
pub enum GtMap {
    Depth(DepthMap),
    Disparity(DisparityMap),
}

/// An opened dataset: the layout plus its sorted image ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub layout: DatasetLayout,
    ids: Vec<String>,
}

fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>, RunnerError> {
    let entries = std::fs::read_dir(dir).map_err(|e| RunnerError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| RunnerError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Dataset(format!("{}: {e}", path.display()))
}

impl Dataset {
    pub fn open(layout: DatasetLayout) -> Result<Self, RunnerError> {
        if !layout.images_dir.is_dir() {
            return Err(RunnerError::Dataset(format!(
                "images directory {} does not exist",
                layout.images_dir.display()
            )));
        }
        let ids = list_stems(&layout.images_dir, "png")?;
        if ids.is_empty() {
            return Err(RunnerError::Dataset(format!(
                "images directory {} holds no PNG images",
                layout.images_dir.display()
            )));
        }
        Ok(Self { layout, ids })
    }

    pub fn open_root(root: &Path) -> Result<Self, RunnerError> {
        Self::open(DatasetLayout::from_root(root))
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.binary_search_by(|s| s.as_str().cmp(id)).is_ok()
    }

    pub fn image(&self, id: &str) -> Result<ImageBuffer, RunnerError> {
        let p = self.layout.images_dir.join(format!("{id}.png"));
        pngio::read_rgb(&p).map_err(|e| data_err(&p, e))
    }

    /// Sorted by sidecar file name. A missing directory is an empty library.
    pub fn cutouts(&self) -> Result<Vec<ObjectCutout>, RunnerError> {
        if !self.layout.cutouts_dir.is_dir() {
            return Ok(Vec::new());
        }
        load_cutout_dir(&self.layout.cutouts_dir).map_err(|e| RunnerError::Dataset(e.to_string()))
    }

    pub fn semantic(&self, id: &str) -> Result<Option<SemanticMap>, RunnerError> {
        let Some(dir) = &self.layout.semantic_dir else {
            return Ok(None);
        };
        let p = dir.join(format!("{id}.png"));
        if !p.exists() {
            return Ok(None);
        }
        let table = dir.join("labels.json");
        let table = table.exists().then_some(table);
        load_semantic(&p, table.as_deref())
            .map(Some)
            .map_err(|e| RunnerError::Dataset(e.to_string()))
    }

    pub fn truth(&self, id: &str) -> Result<Option<SceneTruth>, RunnerError> {
        let Some(dir) = &self.layout.gt_dir else {
            return Ok(None);
        };
        let p = dir.join(format!("{id}.json"));
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read(&p).map_err(|e| RunnerError::io(&p, e))?;
        let t: SceneTruth = serde_json::from_slice(&text).map_err(|e| data_err(&p, e))?;
        if !t.horizon_y.is_finite() || !t.roll_deg.is_finite() {
            return Err(data_err(&p, "non-finite scene truth"));
        }
        Ok(Some(t))
    }

    pub fn gt_map(&self, id: &str, kind: GtKind) -> Result<Option<GtMap>, RunnerError> {
        let Some(dir) = &self.layout.gt_dir else {
            return Ok(None);
        };
        match kind {
            GtKind::NormalizedDisparity => {
                if !wire::disp_json(dir, id).exists() {
                    return Ok(None);
                }
                let map = wire::check_response(dir, id, None)?;
                Ok(Some(GtMap::Disparity(map)))
            }
            GtKind::DepthM => {
                let p = dir.join(format!("{id}.depth.png"));
                if !p.exists() {
                    return Ok(None);
                }
                let (w, h, px) = pngio::read_gray16(&p).map_err(|e| data_err(&p, e))?;
                let values = px.iter().map(|&v| v as f64 / 256.0).collect();
                Ok(Some(GtMap::Depth(DepthMap::new(w, h, values).map_err(|e| data_err(&p, e))?)))
            }
        }
    }

    /// Obstacle masks of `id`, checked against the image size.
    pub fn obstacles(&self, id: &str, width: usize, height: usize) -> Result<Vec<BitMask>, RunnerError> {
        let Some(dir) = &self.layout.obstacles_dir else {
            return Ok(Vec::new());
        };
        let dir = dir.join(id);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for stem in list_stems(&dir, "png")? {
            let p = dir.join(format!("{stem}.png"));
            let m = pngio::read_mask(&p).map_err(|e| data_err(&p, e))?;
            if (m.width(), m.height()) != (width, height) {
                return Err(data_err(
                    &p,
                    format!("mask is {}x{}, image is {width}x{height}", m.width(), m.height()),
                ));
            }
            out.push(m);
        }
        Ok(out)
    }
}

/// Write depth in the 16-bit 1/256 m convention; invalid pixels become 0.
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<(), RunnerError> {
    let (w, h) = (depth.width(), depth.height());
    let mut px = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let v = depth.valid_value(c, r).map_or(0.0, |z| (z * 256.0).round().min(65535.0));
            px.push(v as u16);
        }
    }
    pngio::write_gray16(path, w, h, &px).map_err(|e| data_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Rgb;

    #[test]
    fn empty_or_missing_images_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::open_root(dir.path()), Err(RunnerError::Dataset(_))));
        std::fs::create_dir(dir.path().join("images")).unwrap();
        assert!(matches!(Dataset::open_root(dir.path()), Err(RunnerError::Dataset(_))));
    }

    #[test]
    fn optional_parts_are_absent_not_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("images")).unwrap();
        let img = ImageBuffer::new(6, 4, Rgb::WHITE).unwrap();
        for id in ["b", "a"] {
            pngio::write_rgb(&dir.path().join("images").join(format!("{id}.png")), &img).unwrap();
        }
        let ds = Dataset::open_root(dir.path()).unwrap();
        assert_eq!(ds.ids(), ["a", "b"]);
        assert!(ds.contains("b") && !ds.contains("c"));
        assert!(ds.cutouts().unwrap().is_empty());
        assert!(ds.semantic("a").unwrap().is_none());
        assert!(ds.truth("a").unwrap().is_none());
        assert!(ds.gt_map("a", GtKind::DepthM).unwrap().is_none());
        assert!(ds.obstacles("a", 6, 4).unwrap().is_empty());
    }

    #[test]
    fn misaligned_obstacle_mask_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("images")).unwrap();
        pngio::write_rgb(&dir.path().join("images/a.png"), &ImageBuffer::new(6, 4, Rgb::WHITE).unwrap()).unwrap();
        std::fs::create_dir_all(dir.path().join("obstacles/a")).unwrap();
        pngio::write_mask(&dir.path().join("obstacles/a/0.png"), &BitMask::new(5, 4)).unwrap();
        let ds = Dataset::open_root(dir.path()).unwrap();
        assert!(matches!(ds.obstacles("a", 6, 4), Err(RunnerError::Dataset(_))));
    }

    #[test]
    fn depth_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("gt")).unwrap();
        pngio::write_rgb(&dir.path().join("images/a.png"), &ImageBuffer::new(3, 2, Rgb::WHITE).unwrap()).unwrap();
        let depth = DepthMap::new(3, 2, vec![1.0, 12.5, 0.0, 80.0, 3.25, -1.0]).unwrap();
        write_depth_png(&dir.path().join("gt/a.depth.png"), &depth).unwrap();
        let ds = Dataset::open_root(dir.path()).unwrap();
        let Some(GtMap::Depth(back)) = ds.gt_map("a", GtKind::DepthM).unwrap() else {
            panic!("expected depth");
        };
        assert_eq!(back, depth_with_invalid_zeroed(&depth));
    }

    fn depth_with_invalid_zeroed(d: &DepthMap) -> DepthMap {
        let mut v = Vec::new();
        for r in 0..d.height() {
            for c in 0..d.width() {
                v.push(d.valid_value(c, r).unwrap_or(0.0));
            }
        }
        DepthMap::new(d.width(), d.height(), v).unwrap()
    }
}
