use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::imgsynth::{PhotometricMode, PlacementMode};
use crate::metrics::MetricSet;

use super::spec::ExperimentKind;
use super::RunnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Ok,
    ModelError,
    FitError,
    Skipped,
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialStatus::Ok => "ok",
            TrialStatus::ModelError => "model-error",
            TrialStatus::FitError => "fit-error",
            TrialStatus::Skipped => "skipped",
        })
    }
}

/// One manipulated image and what was measured on the model's answer.
///
/// `truth` and `estimate` are the pair an experiment aggregates: e.g. the
/// true and estimated horizon shift of a crop, or the requested and
/// estimated relative distance of a paste.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: ExperimentKind,
    pub image_id: String,
    /// Trials of one family share a reference measurement.
    pub family: String,
    pub r: Option<f64>,
    pub placement: Option<PlacementMode>,
    pub offset_px: Option<i64>,
    pub angle_deg: Option<f64>,
    pub photometric: Option<PhotometricMode>,
    pub probe_id: Option<String>,
    pub region_mean_disparity: Option<f64>,
    pub horizon_y: Option<f64>,
    pub horizon_spread: Option<f64>,
    pub roll_deg: Option<f64>,
    pub detection_score: Option<f64>,
    pub implied_distance_m: Option<f64>,
    pub metrics: Option<MetricSet>,
    pub truth: Option<f64>,
    pub estimate: Option<f64>,
    pub status: TrialStatus,
    pub reason: String,
}

impl TrialRecord {
    pub fn new(kind: ExperimentKind, image_id: &str, family: impl Into<String>) -> Self {
        Self {
            kind,
            image_id: image_id.to_string(),
            family: family.into(),
            r: None,
            placement: None,
            offset_px: None,
            angle_deg: None,
            photometric: None,
            probe_id: None,
            region_mean_disparity: None,
            horizon_y: None,
            horizon_spread: None,
            roll_deg: None,
            detection_score: None,
            implied_distance_m: None,
            metrics: None,
            truth: None,
            estimate: None,
            status: TrialStatus::Ok,
            reason: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }

    pub(crate) fn fail(&mut self, status: TrialStatus, reason: impl Into<String>) {
        self.status = status;
        self.reason = reason.into();
    }
}

/// Flat CSV row; the metric set is spread over its own columns.
#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    kind: ExperimentKind,
    image_id: String,
    family: String,
    r: Option<f64>,
    placement: Option<PlacementMode>,
    offset_px: Option<i64>,
    angle_deg: Option<f64>,
    photometric: Option<PhotometricMode>,
    probe_id: Option<String>,
    region_mean_disparity: Option<f64>,
    horizon_y: Option<f64>,
    horizon_spread: Option<f64>,
    roll_deg: Option<f64>,
    detection_score: Option<f64>,
    implied_distance_m: Option<f64>,
    abs_rel: Option<f64>,
    sq_rel: Option<f64>,
    rmse_m: Option<f64>,
    rmse_log: Option<f64>,
    d1_all_pct: Option<f64>,
    delta1: Option<f64>,
    delta2: Option<f64>,
    delta3: Option<f64>,
    truth: Option<f64>,
    estimate: Option<f64>,
    status: TrialStatus,
    reason: String,
}

impl From<&TrialRecord> for TrialRow {
    fn from(t: &TrialRecord) -> Self {
        let m = t.metrics.map(|m| m.values().map(Some)).unwrap_or([None; 8]);
        TrialRow {
            kind: t.kind,
            image_id: t.image_id.clone(),
            family: t.family.clone(),
            r: t.r,
            placement: t.placement,
            offset_px: t.offset_px,
            angle_deg: t.angle_deg,
            photometric: t.photometric,
            probe_id: t.probe_id.clone(),
            region_mean_disparity: t.region_mean_disparity,
            horizon_y: t.horizon_y,
            horizon_spread: t.horizon_spread,
            roll_deg: t.roll_deg,
            detection_score: t.detection_score,
            implied_distance_m: t.implied_distance_m,
            abs_rel: m[0],
            sq_rel: m[1],
            rmse_m: m[2],
            rmse_log: m[3],
            d1_all_pct: m[4],
            delta1: m[5],
            delta2: m[6],
            delta3: m[7],
            truth: t.truth,
            estimate: t.estimate,
            status: t.status,
            reason: t.reason.clone(),
        }
    }
}

impl TryFrom<TrialRow> for TrialRecord {
    type Error = RunnerError;

    fn try_from(r: TrialRow) -> Result<Self, RunnerError> {
        let cols = [r.abs_rel, r.sq_rel, r.rmse_m, r.rmse_log, r.d1_all_pct, r.delta1, r.delta2, r.delta3];
        let metrics = match cols.iter().filter(|c| c.is_some()).count() {
            0 => None,
            8 => Some(MetricSet::from_values(cols.map(|c| c.expect("all present")))),
            _ => {
                return Err(RunnerError::Csv(format!(
                    "trial {}/{} has a partial metric set",
                    r.image_id, r.family
                )))
            }
        };
        Ok(TrialRecord {
            kind: r.kind,
            image_id: r.image_id,
            family: r.family,
            r: r.r,
            placement: r.placement,
            offset_px: r.offset_px,
            angle_deg: r.angle_deg,
            photometric: r.photometric,
            probe_id: r.probe_id,
            region_mean_disparity: r.region_mean_disparity,
            horizon_y: r.horizon_y,
            horizon_spread: r.horizon_spread,
            roll_deg: r.roll_deg,
            detection_score: r.detection_score,
            implied_distance_m: r.implied_distance_m,
            metrics,
            truth: r.truth,
            estimate: r.estimate,
            status: r.status,
            reason: r.reason,
        })
    }
}

pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialRecord]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_writer(out);
    for t in trials {
        w.serialize(TrialRow::from(t)).map_err(|e| RunnerError::Csv(e.to_string()))?;
    }
    if trials.is_empty() {
        // header only
        w.write_record(TRIAL_COLUMNS).map_err(|e| RunnerError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| RunnerError::Csv(e.to_string()))
}

pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>, RunnerError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize::<TrialRow>() {
        out.push(TrialRecord::try_from(row.map_err(|e| RunnerError::Csv(e.to_string()))?)?);
    }
    Ok(out)
}

const TRIAL_COLUMNS: [&str; 27] = [
    "kind",
    "image_id",
    "family",
    "r",
    "placement",
    "offset_px",
    "angle_deg",
    "photometric",
    "probe_id",
    "region_mean_disparity",
    "horizon_y",
    "horizon_spread",
    "roll_deg",
    "detection_score",
    "implied_distance_m",
    "abs_rel",
    "sq_rel",
    "rmse_m",
    "rmse_log",
    "d1_all_pct",
    "delta1",
    "delta2",
    "delta3",
    "truth",
    "estimate",
    "status",
    "reason",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TrialRecord> {
        let mut a = TrialRecord::new(ExperimentKind::PositionVsScale, "scene_000", "car@scene_000/PositionOnly");
        a.r = Some(1.7);
        a.placement = Some(PlacementMode::PositionOnly);
        a.region_mean_disparity = Some(0.1 + 0.2);
        a.truth = Some(1.7);
        a.estimate = Some(1.699_999_999_999_999_8);
        let mut b = TrialRecord::new(ExperimentKind::PhotometricSuite, "scene, \"quoted\"", "x");
        b.photometric = Some(PhotometricMode::FalseColors);
        b.metrics = Some(MetricSet::from_values([0.1, 0.2, 3.0, 0.4, 5.0, 0.6, 0.7, 0.8]));
        let mut c = TrialRecord::new(ExperimentKind::RollCrop, "s", "s");
        c.angle_deg = Some(-0.0);
        c.fail(TrialStatus::FitError, "band empty\nsecond line");
        vec![a, b, c]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trials = sample();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &trials).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&TRIAL_COLUMNS.join(",")));
        let back = read_trials_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trials);
        assert!(back[2].angle_deg.unwrap().is_sign_negative());
    }

    #[test]
    fn empty_table_has_a_header() {
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), TRIAL_COLUMNS.join(","));
        let mut again = Vec::new();
        write_trials_csv(&mut again, &sample()[..1]).unwrap();
        let header = String::from_utf8(again).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, TRIAL_COLUMNS.join(","));
    }

    #[test]
    fn status_names() {
        assert_eq!(serde_json::to_string(&TrialStatus::ModelError).unwrap(), "\"model-error\"");
        assert_eq!(TrialStatus::FitError.to_string(), "fit-error");
    }
}
