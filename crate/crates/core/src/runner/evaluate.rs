//! Metric evaluation of precomputed predictions, for model outputs produced
//! outside the harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::geometry::CameraModel;
use crate::metrics::{compute_metrics, EvalConfig, GroundTruth, MetricSet};
use crate::modelio::wire;

use super::dataset::{Dataset, GtMap};
use super::RunnerError;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionScore {
    pub mean: MetricSet,
    /// Images that had both a prediction and ground truth.
    pub n_images: usize,
    pub missing: Vec<String>,
}

/// Score each condition's directory of wire-format disparity maps
/// (`<id>.disp.png` + `<id>.disp.json`) against the dataset's ground truth.
pub fn evaluate_predictions(
    data: &Dataset,
    conditions: &[(String, PathBuf)],
    camera: &CameraModel,
    cfg: &EvalConfig,
) -> Result<BTreeMap<String, ConditionScore>, RunnerError> {
    cfg.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
    let mut gts = Vec::new();
    for id in data.ids() {
        if let Some(gt) = data.gt_map(id, cfg.gt_kind)? {
            gts.push((id.clone(), gt));
        }
    }
    if gts.is_empty() {
        return Err(RunnerError::Dataset("no ground truth maps for the requested kind".into()));
    }
    let mut out = BTreeMap::new();
    for (name, dir) in conditions {
        let mut sets = Vec::new();
        let mut missing = Vec::new();
        for (id, gt) in &gts {
            if !wire::disp_json(dir, id).exists() {
                missing.push(id.clone());
                continue;
            }
            let pred = wire::check_response(dir, id, Some(gt_dims(gt)))?;
            let g = match gt {
                GtMap::Depth(m) => GroundTruth::Depth(m),
                GtMap::Disparity(m) => GroundTruth::Disparity(m),
            };
            let m = compute_metrics(&pred, g, camera, cfg).map_err(|e| eval_err(dir, id, e))?;
            sets.push(m);
        }
        let mean = MetricSet::mean(&sets)
            .ok_or_else(|| RunnerError::Dataset(format!("condition {name}: no predictions in {}", dir.display())))?;
        out.insert(
            name.clone(),
            ConditionScore {
                mean,
                n_images: sets.len(),
                missing,
            },
        );
    }
    Ok(out)
}

fn gt_dims(gt: &GtMap) -> (usize, usize) {
    match gt {
        GtMap::Depth(m) => (m.width(), m.height()),
        GtMap::Disparity(m) => (m.width(), m.height()),
    }
}

fn eval_err(dir: &Path, id: &str, e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Dataset(format!("{}: {id}: {e}", dir.display()))
}
