//! Depth evaluation metrics (abs rel, sq rel, RMSE, RMSE log, D1-all and the
//! δ < 1.25^k accuracies) and per-condition comparison tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CameraModel;
use crate::imgsynth::PhotometricMode;
use crate::raster::{DepthMap, DisparityMap, FracRect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no valid ground-truth pixels inside the evaluation crop")]
    NoValidPixels,
    #[error("prediction is {pred_w}x{pred_h}, ground truth is {gt_w}x{gt_h}")]
    DimensionMismatch {
        pred_w: usize,
        pred_h: usize,
        gt_w: usize,
        gt_h: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse_m: f64,
    pub rmse_log: f64,
    pub d1_all_pct: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl MetricSet {
    pub const FIELDS: [&'static str; 8] = [
        "abs_rel", "sq_rel", "rmse", "rmse_log", "d1_all", "delta1", "delta2", "delta3",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse_m,
            self.rmse_log,
            self.d1_all_pct,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        Self {
            abs_rel: v[0],
            sq_rel: v[1],
            rmse_m: v[2],
            rmse_log: v[3],
            d1_all_pct: v[4],
            delta1: v[5],
            delta2: v[6],
            delta3: v[7],
        }
    }

    /// Whether a larger value of field `i` is better.
    pub fn higher_is_better(i: usize) -> bool {
        i >= 5
    }

    /// Elementwise mean; `None` for an empty slice.
    pub fn mean(sets: &[MetricSet]) -> Option<MetricSet> {
        if sets.is_empty() {
            return None;
        }
        let mut acc = [0.0; 8];
        for s in sets {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        Some(Self::from_values(acc.map(|a| a / sets.len() as f64)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GtKind {
    #[default]
    DepthM,
    NormalizedDisparity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub depth_cap_m: f64,
    pub min_depth_m: f64,
    pub eval_crop: FracRect,
    pub gt_kind: GtKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            depth_cap_m: 80.0,
            min_depth_m: 1e-3,
            eval_crop: FracRect::FULL,
            gt_kind: GtKind::DepthM,
        }
    }
}

impl EvalConfig {
    /// The crop commonly used on KITTI (Garg et al.).
    pub const GARG_CROP: FracRect = FracRect {
        left: 0.035_947_71,
        right: 0.964_052_29,
        top: 0.408_108_11,
        bottom: 0.991_891_89,
    };

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.min_depth_m > 0.0 && self.min_depth_m < self.depth_cap_m && self.depth_cap_m.is_finite()) {
            return Err(MetricsError::Config(format!(
                "need 0 < min_depth_m ({}) < depth_cap_m ({})",
                self.min_depth_m, self.depth_cap_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GroundTruth<'a> {
    Depth(&'a DepthMap),
    Disparity(&'a DisparityMap),
}

impl GroundTruth<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            GroundTruth::Depth(m) => (m.width(), m.height()),
            GroundTruth::Disparity(m) => (m.width(), m.height()),
        }
    }

    fn depth(&self, col: usize, row: usize, camera: &CameraModel) -> Option<f64> {
        match self {
            GroundTruth::Depth(m) => m.valid_value(col, row),
            GroundTruth::Disparity(m) => m
                .valid_value(col, row)
                .filter(|&d| d > 0.0)
                .map(|d| camera.disparity_to_depth(d)),
        }
    }
}

/// Metrics of `pred` against `gt` over the crop. Invalid prediction pixels
/// count as zero disparity (the depth cap).
pub fn compute_metrics(
    pred: &DisparityMap,
    gt: GroundTruth<'_>,
    camera: &CameraModel,
    cfg: &EvalConfig,
) -> Result<MetricSet, MetricsError> {
    cfg.validate()?;
    let (gw, gh) = gt.dims();
    if (pred.width(), pred.height()) != (gw, gh) {
        return Err(MetricsError::DimensionMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            gt_w: gw,
            gt_h: gh,
        });
    }
    let crop = cfg.eval_crop.resolve(gw, gh);
    let fb = camera.disparity_depth_product();
    let w_px = camera.image_w_px as f64;

    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    let mut d1_bad = 0usize;
    for row in crop.y0..crop.y1() {
        for col in crop.x0..crop.x1() {
            let Some(zt) = gt.depth(col, row, camera) else { continue };
            if !(zt > cfg.min_depth_m && zt < cfg.depth_cap_m) {
                continue;
            }
            let dp = pred.valid_value(col, row).unwrap_or(0.0);
            let z = (fb / dp).clamp(cfg.min_depth_m, cfg.depth_cap_m);
            let err = z - zt;
            abs_rel += err.abs() / zt;
            sq_rel += err * err / zt;
            sq += err * err;
            sq_log += (z.ln() - zt.ln()).powi(2);
            let ratio = (z / zt).max(zt / z);
            for (k, c) in within.iter_mut().enumerate() {
                if ratio < 1.25f64.powi(k as i32 + 1) {
                    *c += 1;
                }
            }
            let gt_px = fb / zt * w_px;
            let pred_px = dp * w_px;
            let e = (pred_px - gt_px).abs();
            if e >= 3.0 && e >= 0.05 * gt_px {
                d1_bad += 1;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoValidPixels);
    }
    let nf = n as f64;
    Ok(MetricSet {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse_m: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        d1_all_pct: 100.0 * d1_bad as f64 / nf,
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
    })
}

/// Write `condition, abs_rel, ..., delta3` rows in the given order.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, MetricSet)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["condition"];
    header.extend(MetricSet::FIELDS);
    w.write_record(&header)?;
    for (cond, m) in rows {
        let mut rec = vec![cond.clone()];
        rec.extend(m.values().iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, MetricSet)>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| MetricsError::Config(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("condition").chain(MetricSet::FIELDS).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MetricsError::Config(format!("unexpected metrics header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| MetricsError::Config(e.to_string()))?;
        let mut v = [0.0; 8];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 1]
                .parse()
                .map_err(|e| MetricsError::Config(format!("row {:?}: {e}", &rec[0])))?;
        }
        rows.push((rec[0].to_string(), MetricSet::from_values(v)));
    }
    Ok(rows)
}

pub const BASELINE_CONDITION: &str = "Unmodified";
pub const NEAR_BASELINE_ABS_REL: f64 = 0.006;
pub const DEGRADED_ABS_REL: f64 = 0.068;
/// Table values are given to three decimals; their differences are not
/// exact in binary.
const FLAG_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    /// Conditions from best to worst.
    pub ranking: Vec<String>,
    /// Value minus the baseline value, per condition.
    pub deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: String,
    pub metrics: Vec<MetricComparison>,
    /// Grayscale and FalseColors both within 0.006 abs rel of the baseline.
    pub value_preserving_near_baseline: bool,
    /// SemanticRgb and ClassAverageColors both at least 0.068 abs rel worse.
    pub flat_color_degraded: bool,
    pub pattern_reproduced: bool,
}

pub fn compare_metric_rows(rows: &BTreeMap<String, MetricSet>) -> Result<ComparisonReport, MetricsError> {
    if rows.len() < 2 {
        return Err(MetricsError::Config(format!("need at least 2 rows, got {}", rows.len())));
    }
    let base = rows.get(BASELINE_CONDITION).ok_or_else(|| {
        MetricsError::Config(format!("missing baseline row {BASELINE_CONDITION:?}"))
    })?;
    let base_v = base.values();
    let metrics = MetricSet::FIELDS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut ranking: Vec<(&String, f64)> = rows.iter().map(|(k, m)| (k, m.values()[i])).collect();
            ranking.sort_by(|a, b| {
                let ord = a.1.total_cmp(&b.1);
                let ord = if MetricSet::higher_is_better(i) { ord.reverse() } else { ord };
                ord.then_with(|| a.0.cmp(b.0))
            });
            MetricComparison {
                metric: name.to_string(),
                ranking: ranking.into_iter().map(|(k, _)| k.clone()).collect(),
                deltas: rows
                    .iter()
                    .map(|(k, m)| (k.clone(), m.values()[i] - base_v[i]))
                    .collect(),
            }
        })
        .collect();
    let abs_rel_delta = |mode: PhotometricMode| rows.get(mode.name()).map(|m| m.abs_rel - base.abs_rel);
    let near = [PhotometricMode::Grayscale, PhotometricMode::FalseColors]
        .into_iter()
        .all(|m| abs_rel_delta(m).is_some_and(|d| d.abs() <= NEAR_BASELINE_ABS_REL + FLAG_SLACK));
    let degraded = [PhotometricMode::SemanticRgb, PhotometricMode::ClassAverageColors]
        .into_iter()
        .all(|m| abs_rel_delta(m).is_some_and(|d| d >= DEGRADED_ABS_REL - FLAG_SLACK));
    Ok(ComparisonReport {
        baseline: BASELINE_CONDITION.to_string(),
        metrics,
        value_preserving_near_baseline: near,
        flat_color_degraded: degraded,
        pattern_reproduced: near && degraded,
    })
}
