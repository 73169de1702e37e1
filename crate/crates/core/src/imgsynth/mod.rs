//! Controlled test-image synthesis.
//!
//! Every operation is a pure function from input buffers to a fresh output
//! buffer; pixels outside an operation's support are copied bit-for-bit.

mod crop;
pub mod library;
mod paste;
mod photometric;
mod probes;

pub use crop::{
    crop_dims, crop_pitch, crop_pitch_map, crop_pitch_mask, crop_roll, crop_roll_map,
    crop_roll_mask, pitch_window, CropParams,
};
pub use paste::{paste_object, round_contact, PasteResult};
pub use photometric::{apply_photometric, class_mean_colors, hsv_to_rgb, rgb_to_hsv, SemanticMap};
pub(crate) use probes::polygon_mask;
pub use probes::{
    add_shadow, context_swap, edge_ablation, flip_vertical, paste_shape, sprite_parts, EdgePart,
    Falloff, PartLabels, ShadowParams, ShapeFill, ShapeResult,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CenteredCoord, GeometryError};
use crate::raster::{BitMask, RasterError, Rgb, RgbaImage};

pub use crate::raster::ImageBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("placement error: {0}")]
    Placement(String),
    #[error("invalid cutout: {0}")]
    InvalidCutout(String),
    #[error("crop window {what} exceeds the {width}x{height} source")]
    Crop {
        what: String,
        width: usize,
        height: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Which of the two cues follow the relative distance when an object is
/// moved away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlacementMode {
    PositionAndScale,
    PositionOnly,
    ScaleOnly,
}

impl PlacementMode {
    pub const ALL: [PlacementMode; 3] = [
        PlacementMode::PositionAndScale,
        PlacementMode::PositionOnly,
        PlacementMode::ScaleOnly,
    ];
}

impl fmt::Display for PlacementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhotometricMode {
    Unmodified,
    Grayscale,
    FalseColors,
    ClassAverageColors,
    SemanticRgb,
}

impl PhotometricMode {
    pub const ALL: [PhotometricMode; 5] = [
        PhotometricMode::Unmodified,
        PhotometricMode::Grayscale,
        PhotometricMode::FalseColors,
        PhotometricMode::ClassAverageColors,
        PhotometricMode::SemanticRgb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhotometricMode::Unmodified => "Unmodified",
            PhotometricMode::Grayscale => "Grayscale",
            PhotometricMode::FalseColors => "FalseColors",
            PhotometricMode::ClassAverageColors => "ClassAverageColors",
            PhotometricMode::SemanticRgb => "SemanticRgb",
        }
    }

    pub fn needs_semantic_map(self) -> bool {
        !matches!(self, PhotometricMode::Unmodified | PhotometricMode::Grayscale)
    }
}

impl fmt::Display for PhotometricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean color per semantic label.
pub type ClassColors = BTreeMap<u16, Rgb>;

/// An object sprite cropped from a source frame.
///
/// `sprite_origin` is the centered coordinate (in the source frame) of the
/// sprite's top-left pixel, so sprite pixel `(i, j)` sat at
/// `sprite_origin + (i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCutout {
    pub sprite: RgbaImage,
    pub sprite_origin: CenteredCoord,
    pub ground_contact: CenteredCoord,
    pub source_id: String,
    pub class_label: String,
    pub placement_slots: Vec<String>,
    /// Sprite-sized mask of the flat measurement patch.
    pub measure_mask: BitMask,
}

impl ObjectCutout {
    pub fn validate(&self) -> Result<(), SynthError> {
        let support = self.sprite.alpha_support();
        let bbox = support
            .bounding_box()
            .ok_or_else(|| SynthError::InvalidCutout(format!("{}: empty alpha support", self.source_id)))?;
        if self.measure_mask.width() != self.sprite.width()
            || self.measure_mask.height() != self.sprite.height()
        {
            return Err(SynthError::InvalidCutout(format!(
                "{}: measure mask is {}x{}, sprite is {}x{}",
                self.source_id,
                self.measure_mask.width(),
                self.measure_mask.height(),
                self.sprite.width(),
                self.sprite.height()
            )));
        }
        if !self.measure_mask.is_subset_of(&support) {
            return Err(SynthError::InvalidCutout(format!(
                "{}: measure mask extends outside the alpha support",
                self.source_id
            )));
        }
        if !self.ground_contact.is_finite() || !self.sprite_origin.is_finite() {
            return Err(SynthError::InvalidCutout(format!(
                "{}: non-finite coordinates",
                self.source_id
            )));
        }
        let cx = self.ground_contact.x - self.sprite_origin.x;
        let cy = self.ground_contact.y - self.sprite_origin.y;
        let bottom = (bbox.y1() - 1) as f64;
        let inside_x = cx >= bbox.x0 as f64 - 2.0 && cx <= (bbox.x1() - 1) as f64 + 2.0;
        if (cy - bottom).abs() > 2.0 || !inside_x {
            return Err(SynthError::InvalidCutout(format!(
                "{}: ground contact ({cx}, {cy}) in sprite coordinates is not on the bottom edge (row {bottom})",
                self.source_id
            )));
        }
        Ok(())
    }

    pub fn has_slot(&self, slot: &str) -> bool {
        self.placement_slots.iter().any(|s| s == slot)
    }
}
