//! Probing which depth cues a monocular depth estimator relies on.
//!
//! The crate renders controlled image edits (object pastes, camera crops,
//! photometric changes), sends them to a depth model and fits the returned
//! disparity maps.

// `!(x > 0.0)` is used on purpose so NaN falls into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod imgsynth;
pub mod metrics;
pub mod modelio;
pub mod pngio;
pub mod raster;
pub mod robustfit;
pub mod runner;

pub use geometry::{CameraModel, CenteredCoord, GeometryError, GroundPlaneModel};
pub use imgsynth::{ObjectCutout, PhotometricMode, PlacementMode, SemanticMap, SynthError};
pub use raster::{BitMask, DepthMap, DisparityMap, FracRect, ImageBuffer, RasterError, Rect, Rgb, RgbaImage};
