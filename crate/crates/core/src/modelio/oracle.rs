use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{CenteredCoord, GroundPlaneModel};
use crate::imgsynth::polygon_mask;
use crate::raster::{BitMask, DisparityMap};

use super::ModelioError;

/// Largest disparity a noisy oracle pixel may take.
const MAX_DISPARITY: f64 = 0.999_999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    /// Reads the scene geometry of the image it is shown.
    GeometryAware,
    /// Always answers with the same prior ground plane.
    FixedPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    /// Vertices in the rendered frame's centered coordinates.
    Polygon(Vec<CenteredCoord>),
    /// A raster aligned with the rendered frame.
    #[serde(skip)]
    Mask(BitMask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub footprint: Footprint,
    pub depth_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub mode: OracleMode,
    pub plane: GroundPlaneModel,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Used by `FixedPrior`; defaults to `plane`.
    #[serde(default)]
    pub prior_plane: Option<GroundPlaneModel>,
    #[serde(default)]
    pub noise_sd: f64,
}

impl OracleSpec {
    pub fn geometry_aware(plane: GroundPlaneModel) -> Self {
        Self {
            mode: OracleMode::GeometryAware,
            plane,
            obstacles: Vec::new(),
            prior_plane: None,
            noise_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelioError> {
        self.plane
            .camera
            .validate()
            .map_err(|e| ModelioError::Oracle(e.to_string()))?;
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(ModelioError::Oracle(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.depth_m > 0.0 && o.depth_m.is_finite()) {
                return Err(ModelioError::Oracle(format!(
                    "obstacle {i} has depth {} m; depths must be positive",
                    o.depth_m
                )));
            }
        }
        Ok(())
    }
}

fn footprint_mask(fp: &Footprint, width: usize, height: usize) -> Result<BitMask, ModelioError> {
    match fp {
        Footprint::Polygon(pts) => {
            let px: Vec<(f64, f64)> = pts.iter().map(|p| p.to_pixel(width, height)).collect();
            Ok(polygon_mask(&px, width, height))
        }
        Footprint::Mask(m) => {
            if (m.width(), m.height()) != (width, height) {
                return Err(ModelioError::Oracle(format!(
                    "obstacle mask is {}x{}, frame is {width}x{height}",
                    m.width(),
                    m.height()
                )));
            }
            Ok(m.clone())
        }
    }
}

/// Render the oracle's disparity answer for a `width x height` image.
pub fn render_oracle(
    spec: &OracleSpec,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<DisparityMap, ModelioError> {
    spec.validate()?;
    if width == 0 || height == 0 {
        return Err(ModelioError::Oracle(format!("empty frame {width}x{height}")));
    }
    let plane = match spec.mode {
        OracleMode::GeometryAware => spec.plane,
        OracleMode::FixedPrior => spec.prior_plane.unwrap_or(spec.plane),
    };
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            values.push(plane.disparity_at(CenteredCoord::from_pixel(col as f64, row as f64, width, height)));
        }
    }
    if spec.mode == OracleMode::GeometryAware {
        let mut order: Vec<&Obstacle> = spec.obstacles.iter().collect();
        // farther first so nearer obstacles paint over them
        order.sort_by(|a, b| b.depth_m.total_cmp(&a.depth_m));
        for o in order {
            let d = spec.plane.camera.depth_to_disparity(o.depth_m);
            if !(d < 1.0) {
                return Err(ModelioError::Oracle(format!(
                    "obstacle at {} m is too close to represent",
                    o.depth_m
                )));
            }
            for (c, r) in footprint_mask(&o.footprint, width, height)?.iter_set() {
                values[r * width + c] = d;
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sd).map_err(|e| ModelioError::Oracle(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, MAX_DISPARITY);
        }
    }
    Ok(DisparityMap::new(width, height, values)?)
}
