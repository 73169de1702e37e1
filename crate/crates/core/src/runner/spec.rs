use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, CenteredCoord};
use crate::imgsynth::{CropParams, EdgePart, PhotometricMode, PlacementMode, ShadowParams};
use crate::metrics::EvalConfig;
use crate::modelio::ModelEndpoint;
use crate::raster::{FracRect, Rgb};
use crate::robustfit::{DisparityBand, HoughParams, RansacParams, GROUND_REGION};

use super::RunnerError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PositionVsScale,
    PitchHorizonNatural,
    PitchCrop,
    PitchVsObstacleDisparity,
    RollCrop,
    PhotometricSuite,
    RecognitionProbes,
    ContextAndFlip,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::PositionVsScale,
        ExperimentKind::PitchHorizonNatural,
        ExperimentKind::PitchCrop,
        ExperimentKind::PitchVsObstacleDisparity,
        ExperimentKind::RollCrop,
        ExperimentKind::PhotometricSuite,
        ExperimentKind::RecognitionProbes,
        ExperimentKind::ContextAndFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PositionVsScale => "position_vs_scale",
            ExperimentKind::PitchHorizonNatural => "pitch_horizon_natural",
            ExperimentKind::PitchCrop => "pitch_crop",
            ExperimentKind::PitchVsObstacleDisparity => "pitch_vs_obstacle_disparity",
            ExperimentKind::RollCrop => "roll_crop",
            ExperimentKind::PhotometricSuite => "photometric_suite",
            ExperimentKind::RecognitionProbes => "recognition_probes",
            ExperimentKind::ContextAndFlip => "context_and_flip",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    /// Accepts `snake_case` or `kebab-case` names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown experiment kind {s:?}; expected one of {}", names.join(", "))
            })
    }
}

fn yes() -> bool {
    true
}

/// A synthetic manipulation for the recognition probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeDef {
    /// A filled polygon pasted into every scene.
    Shape {
        id: String,
        polygon: Vec<CenteredCoord>,
        color: Rgb,
        /// Whether the oracle treats the shape as an obstacle.
        #[serde(default = "yes")]
        register: bool,
    },
    /// Each cutout pasted on its source scene with only some parts kept.
    EdgeAblation {
        id: String,
        keep: Vec<EdgePart>,
        band_px: usize,
        #[serde(default = "yes")]
        register: bool,
    },
    /// Each cutout pasted on its source scene with a shadow below it.
    Shadow {
        id: String,
        shadow: ShadowParams,
        #[serde(default = "yes")]
        register: bool,
    },
}

impl ProbeDef {
    pub fn id(&self) -> &str {
        match self {
            ProbeDef::Shape { id, .. } | ProbeDef::EdgeAblation { id, .. } | ProbeDef::Shadow { id, .. } => id,
        }
    }

    pub fn register(&self) -> bool {
        match self {
            ProbeDef::Shape { register, .. }
            | ProbeDef::EdgeAblation { register, .. }
            | ProbeDef::Shadow { register, .. } => *register,
        }
    }

    pub fn defaults() -> Vec<ProbeDef> {
        let c = CenteredCoord::new;
        vec![
            ProbeDef::Shape {
                id: "triangle".into(),
                polygon: vec![c(-40.5, 120.0), c(39.5, 120.0), c(-0.5, 60.0)],
                color: Rgb([70, 70, 80]),
                register: true,
            },
            ProbeDef::Shape {
                id: "inverted_triangle".into(),
                polygon: vec![c(-40.5, 60.0), c(39.5, 60.0), c(-0.5, 120.0)],
                color: Rgb([70, 70, 80]),
                register: true,
            },
            ProbeDef::EdgeAblation {
                id: "bottom_and_sides".into(),
                keep: vec![EdgePart::Bottom, EdgePart::Left, EdgePart::Right],
                band_px: 4,
                register: true,
            },
            ProbeDef::EdgeAblation {
                id: "no_bottom".into(),
                keep: vec![EdgePart::Left, EdgePart::Right, EdgePart::Top, EdgePart::Interior],
                band_px: 4,
                register: true,
            },
            ProbeDef::Shadow {
                id: "shadow".into(),
                shadow: ShadowParams::default(),
                register: true,
            },
        ]
    }
}

fn r_sweep() -> Vec<f64> {
    (10..=30).map(|k| k as f64 / 10.0).collect()
}

/// Parameters of every experiment kind; each kind reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    pub camera: CameraModel,
    pub r_values: Vec<f64>,
    pub placement_modes: Vec<PlacementMode>,
    pub offsets_px: Vec<i64>,
    pub roll_angles_deg: Vec<f64>,
    pub photometric_modes: Vec<PhotometricMode>,
    pub probes: Vec<ProbeDef>,
    pub pitch_crop: CropParams,
    pub roll_crop: CropParams,
    pub ground_region: FracRect,
    pub ransac: RansacParams,
    pub horizon_repeats: usize,
    pub band: DisparityBand,
    pub hough: HoughParams,
    pub eval: EvalConfig,
    pub outlier_sd: f64,
    /// Also run both oracles and report where the endpoint's slope falls.
    pub bracket: bool,
    /// Horizon of the fixed prior the `FixedPrior` oracle answers with.
    pub prior_horizon_y: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            r_values: r_sweep(),
            placement_modes: PlacementMode::ALL.to_vec(),
            offsets_px: vec![-30, -20, -10, 0, 10, 20, 30],
            roll_angles_deg: vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
            photometric_modes: PhotometricMode::ALL.to_vec(),
            probes: ProbeDef::defaults(),
            pitch_crop: CropParams::PITCH,
            roll_crop: CropParams::ROLL,
            ground_region: GROUND_REGION,
            ransac: RansacParams::default(),
            horizon_repeats: 5,
            band: DisparityBand::default(),
            hough: HoughParams::default(),
            eval: EvalConfig::default(),
            outlier_sd: 3.0,
            bracket: true,
            prior_horizon_y: 0.0,
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub endpoint: ModelEndpoint,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ExperimentParams,
}

fn config(msg: impl Into<String>) -> RunnerError {
    RunnerError::Config(msg.into())
}

fn contains_zero(xs: &[f64]) -> bool {
    xs.contains(&0.0)
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, endpoint: ModelEndpoint) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            endpoint,
            seed: 0,
            params: ExperimentParams::default(),
        }
    }

    /// Parse a TOML or JSON document, chosen by the file extension.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        let spec: ExperimentSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.endpoint.validate()?;
        let p = &self.params;
        p.camera.validate().map_err(|e| config(e.to_string()))?;
        p.eval.validate().map_err(|e| config(e.to_string()))?;
        if p.horizon_repeats == 0 {
            return Err(config("horizon_repeats must be at least 1"));
        }
        if !(p.outlier_sd > 0.0) {
            return Err(config(format!("outlier_sd must be positive, got {}", p.outlier_sd)));
        }
        match self.kind {
            ExperimentKind::PositionVsScale => {
                if p.r_values.is_empty() {
                    return Err(config("r sweep is empty"));
                }
                if let Some(r) = p.r_values.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
                    return Err(config(format!("relative distance {r} outside (0, inf)")));
                }
                if !p.r_values.contains(&1.0) {
                    return Err(config("r sweep must contain 1.0, the reference placement"));
                }
                if p.placement_modes.is_empty() {
                    return Err(config("no placement modes"));
                }
            }
            ExperimentKind::PitchCrop | ExperimentKind::PitchVsObstacleDisparity => {
                if p.offsets_px.is_empty() {
                    return Err(config("crop offsets are empty"));
                }
                if !p.offsets_px.contains(&0) {
                    return Err(config("crop offsets must contain 0, the reference crop"));
                }
            }
            ExperimentKind::RollCrop => {
                if p.roll_angles_deg.is_empty() {
                    return Err(config("roll sweep is empty"));
                }
                if !contains_zero(&p.roll_angles_deg) {
                    return Err(config("roll sweep must contain 0, the reference crop"));
                }
                if p.roll_angles_deg.iter().any(|a| !a.is_finite()) {
                    return Err(config("roll angles must be finite"));
                }
            }
            ExperimentKind::PhotometricSuite => {
                if p.photometric_modes.is_empty() {
                    return Err(config("no photometric modes"));
                }
            }
            ExperimentKind::RecognitionProbes => {
                if p.probes.is_empty() {
                    return Err(config("no probes defined"));
                }
                let mut ids: Vec<&str> = p.probes.iter().map(|d| d.id()).collect();
                ids.sort_unstable();
                if ids.windows(2).any(|w| w[0] == w[1]) {
                    return Err(config("probe ids must be unique"));
                }
            }
            ExperimentKind::PitchHorizonNatural | ExperimentKind::ContextAndFlip => {}
        }
        Ok(())
    }
}
