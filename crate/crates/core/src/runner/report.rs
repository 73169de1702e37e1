use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{compare_metric_rows, write_metrics_csv, ComparisonReport, MetricSet, BASELINE_CONDITION};
use crate::robustfit::{mean_sd, regress_with_outlier_rejection, RegressionSummary};

use super::spec::{ExperimentKind, ExperimentSpec};
use super::trial::{read_trials_csv, write_trials_csv, TrialRecord};
use super::RunnerError;

pub const REPORT_JSON: &str = "report.json";
pub const TRIALS_CSV: &str = "trials.csv";
pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

/// Mean and SD of the estimate per parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub series: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub quantity: String,
    pub category: String,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

/// The same regression with and without outlier rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionPair {
    pub rejected: RegressionSummary,
    pub raw: RegressionSummary,
}

/// Where an endpoint's slope falls between the two oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub fixed_prior_slope: f64,
    pub geometry_aware_slope: f64,
    pub endpoint_slope: f64,
    pub within: bool,
}

impl Bracket {
    pub fn new(fixed_prior_slope: f64, geometry_aware_slope: f64, endpoint_slope: f64) -> Self {
        let slack = 1e-9;
        Self {
            fixed_prior_slope,
            geometry_aware_slope,
            endpoint_slope,
            within: fixed_prior_slope - slack <= endpoint_slope && endpoint_slope <= geometry_aware_slope + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub endpoint: String,
    pub dataset_ids: usize,
}

impl Provenance {
    pub fn new(spec: &ExperimentSpec, dataset_ids: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            endpoint: serde_json::to_string(&spec.endpoint).expect("endpoint serializes"),
            dataset_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub provenance: Provenance,
    pub status_counts: BTreeMap<String, usize>,
    pub curves: Vec<Curve>,
    pub regression: Option<RegressionPair>,
    pub bracket: Option<Bracket>,
    pub categories: Vec<CategoryStat>,
    pub metric_rows: BTreeMap<String, MetricSet>,
    /// Conditions without a single evaluated trial, with the reason.
    pub skipped_conditions: BTreeMap<String, String>,
    pub comparison: Option<ComparisonReport>,
    pub trials: Vec<TrialRecord>,
}

fn curve_key(kind: ExperimentKind, t: &TrialRecord) -> Option<(String, f64)> {
    let x = match kind {
        ExperimentKind::PositionVsScale => return Some((t.placement?.to_string(), t.r?)),
        ExperimentKind::PitchCrop | ExperimentKind::RollCrop => t.truth?,
        ExperimentKind::PitchHorizonNatural => t.truth?.round(),
        ExperimentKind::PitchVsObstacleDisparity => t.offset_px? as f64,
        _ => return None,
    };
    let series = match kind {
        ExperimentKind::PitchCrop => "horizon_shift",
        ExperimentKind::RollCrop => "roll_change",
        ExperimentKind::PitchHorizonNatural => "horizon",
        _ => "relative_disparity",
    };
    Some((series.to_string(), x))
}

fn axis_labels(kind: ExperimentKind) -> (&'static str, &'static str) {
    match kind {
        ExperimentKind::PositionVsScale => ("relative distance r", "estimated relative distance"),
        ExperimentKind::PitchCrop => ("true horizon shift (px)", "estimated horizon shift (px)"),
        ExperimentKind::PitchHorizonNatural => ("true horizon (px)", "estimated horizon (px)"),
        ExperimentKind::PitchVsObstacleDisparity => ("crop offset (px)", "relative obstacle disparity"),
        ExperimentKind::RollCrop => ("true roll change (deg)", "estimated roll change (deg)"),
        _ => ("", ""),
    }
}

fn has_regression(kind: ExperimentKind) -> bool {
    matches!(
        kind,
        ExperimentKind::PitchCrop | ExperimentKind::PitchHorizonNatural | ExperimentKind::RollCrop
    )
}

/// Drop the sign of zero so `-0.0` and `0.0` share a bin.
fn bin(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn curves(kind: ExperimentKind, trials: &[TrialRecord]) -> Vec<Curve> {
    let mut bins: BTreeMap<String, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    for t in trials.iter().filter(|t| t.is_ok()) {
        let (Some((series, x)), Some(y)) = (curve_key(kind, t), t.estimate) else {
            continue;
        };
        let x = bin(x);
        let series = bins.entry(series).or_default();
        match series.iter_mut().find(|(bx, _)| *bx == x) {
            Some((_, ys)) => ys.push(y),
            None => series.push((x, vec![y])),
        }
    }
    let (xl, yl) = axis_labels(kind);
    bins.into_iter()
        .map(|(series, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Curve {
                series,
                x_label: xl.to_string(),
                y_label: yl.to_string(),
                points: pts
                    .into_iter()
                    .map(|(x, ys)| {
                        let (mean, sd) = mean_sd(&ys);
                        CurvePoint { x, n: ys.len(), mean, sd }
                    })
                    .collect(),
            }
        })
        .collect()
}

type Quantity = (&'static str, fn(&TrialRecord) -> Option<f64>);

fn categories(kind: ExperimentKind, trials: &[TrialRecord]) -> Vec<CategoryStat> {
    let quantities: &[Quantity] = match kind {
        ExperimentKind::RecognitionProbes => &[
            ("detection_score", |t| t.detection_score),
            ("implied_distance_m", |t| t.implied_distance_m),
        ],
        ExperimentKind::ContextAndFlip => &[("relative_disparity", |t| t.estimate)],
        _ => &[],
    };
    let mut out = Vec::new();
    for (name, get) in quantities {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for t in trials.iter().filter(|t| t.is_ok()) {
            if let (Some(id), Some(v)) = (t.probe_id.as_deref(), get(t)) {
                groups.entry(id).or_default().push(v);
            }
        }
        for (cat, vs) in groups {
            let (mean, sd) = mean_sd(&vs);
            out.push(CategoryStat {
                quantity: name.to_string(),
                category: cat.to_string(),
                n: vs.len(),
                mean,
                sd,
            });
        }
    }
    out
}

type MetricTable = (BTreeMap<String, MetricSet>, BTreeMap<String, String>);

fn metric_table(spec: &ExperimentSpec, trials: &[TrialRecord]) -> MetricTable {
    let mut rows = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    if spec.kind != ExperimentKind::PhotometricSuite {
        return (rows, skipped);
    }
    for mode in &spec.params.photometric_modes {
        let of_mode: Vec<&TrialRecord> = trials.iter().filter(|t| t.photometric == Some(*mode)).collect();
        let sets: Vec<MetricSet> = of_mode.iter().filter(|t| t.is_ok()).filter_map(|t| t.metrics).collect();
        match MetricSet::mean(&sets) {
            Some(m) => {
                rows.insert(mode.name().to_string(), m);
            }
            None => {
                let reason = of_mode
                    .iter()
                    .find(|t| !t.reason.is_empty())
                    .map_or_else(|| "no trials".to_string(), |t| format!("{}: {}", t.status, t.reason));
                skipped.insert(mode.name().to_string(), reason);
            }
        }
    }
    (rows, skipped)
}

pub(crate) fn regression_pairs(trials: &[TrialRecord]) -> Vec<(f64, f64)> {
    trials
        .iter()
        .filter(|t| t.is_ok())
        .filter_map(|t| Some((t.truth?, t.estimate?)))
        .collect()
}

pub(crate) fn regress(pairs: &[(f64, f64)], threshold_sd: f64) -> Result<RegressionPair, RunnerError> {
    let rejected = regress_with_outlier_rejection(pairs, threshold_sd).map_err(|e| RunnerError::Regression(e.to_string()))?;
    let raw = regress_with_outlier_rejection(pairs, f64::INFINITY).map_err(|e| RunnerError::Regression(e.to_string()))?;
    Ok(RegressionPair { rejected, raw })
}

impl ExperimentReport {
    /// Everything but the spec, provenance and bracket is a function of the
    /// trials.
    pub fn from_trials(
        spec: ExperimentSpec,
        provenance: Provenance,
        trials: Vec<TrialRecord>,
        bracket: Option<Bracket>,
    ) -> Result<Self, RunnerError> {
        if trials.is_empty() {
            return Err(RunnerError::AllTrialsFailed("the experiment produced no trials".into()));
        }
        if !trials.iter().any(|t| t.is_ok()) {
            let t = &trials[0];
            return Err(RunnerError::AllTrialsFailed(format!(
                "all {} trials failed; first: {} {} ({}: {})",
                trials.len(),
                t.image_id,
                t.family,
                t.status,
                t.reason
            )));
        }
        let mut status_counts = BTreeMap::new();
        for t in &trials {
            *status_counts.entry(t.status.to_string()).or_insert(0) += 1;
        }
        let regression = if has_regression(spec.kind) {
            Some(regress(&regression_pairs(&trials), spec.params.outlier_sd)?)
        } else {
            None
        };
        let (metric_rows, skipped_conditions) = metric_table(&spec, &trials);
        let comparison = if metric_rows.contains_key(BASELINE_CONDITION) {
            Some(compare_metric_rows(&metric_rows).map_err(|e| RunnerError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            curves: curves(spec.kind, &trials),
            categories: categories(spec.kind, &trials),
            spec,
            provenance,
            status_counts,
            regression,
            bracket,
            metric_rows,
            skipped_conditions,
            comparison,
            trials,
        })
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    std::fs::write(path, bytes).map_err(|e| RunnerError::io(path, e))
}

/// Write `report.json`, `trials.csv`, one SVG per curve and, for metric
/// suites, `metrics.csv`. Returns the paths written, in a fixed order.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    std::fs::create_dir_all(out_dir).map_err(|e| RunnerError::io(out_dir, e))?;
    let mut written = Vec::new();

    let json = serde_json::to_vec_pretty(report).map_err(|e| RunnerError::Csv(e.to_string()))?;
    let p = out_dir.join(REPORT_JSON);
    write_file(&p, &json)?;
    written.push(p);

    let mut csv = Vec::new();
    write_trials_csv(&mut csv, &report.trials)?;
    let p = out_dir.join(TRIALS_CSV);
    write_file(&p, &csv)?;
    written.push(p);

    if !report.metric_rows.is_empty() {
        let rows: Vec<(String, MetricSet)> = report.metric_rows.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).map_err(|e| RunnerError::Csv(e.to_string()))?;
        let p = out_dir.join(METRICS_CSV);
        write_file(&p, &buf)?;
        written.push(p);
    }

    for c in &report.curves {
        let p = out_dir.join(format!("curve_{}.svg", slug(&c.series)));
        write_file(&p, curve_svg(c, &report.spec.kind.to_string()).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// Rebuild a report from `trials.csv`, taking the spec, provenance and
/// bracket from the `report.json` next to it.
pub fn rebuild_report(dir: &Path) -> Result<ExperimentReport, RunnerError> {
    let jp = dir.join(REPORT_JSON);
    let text = std::fs::read(&jp).map_err(|e| RunnerError::io(&jp, e))?;
    let old: ExperimentReport =
        serde_json::from_slice(&text).map_err(|e| RunnerError::Csv(format!("{}: {e}", jp.display())))?;
    let cp = dir.join(TRIALS_CSV);
    let f = std::fs::File::open(&cp).map_err(|e| RunnerError::io(&cp, e))?;
    let trials = read_trials_csv(f)?;
    ExperimentReport::from_trials(old.spec, old.provenance, trials, old.bracket)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = (lo.abs() * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean line with a shaded +-1 SD band.
pub fn curve_svg(curve: &Curve, title: &str) -> String {
    let pts = &curve.points;
    let sd = |p: &CurvePoint| p.sd.unwrap_or(0.0);
    let (x0, x1) = padded(
        pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        pts.iter().map(|p| p.mean - sd(p)).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.mean + sd(p)).fold(f64::NEG_INFINITY, f64::max),
    );
    let pw = SVG_W - MARGIN_L - MARGIN_R;
    let ph = SVG_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{} / {}</text>"#,
        SVG_W / 2.0,
        esc(title),
        esc(&curve.series)
    );
    let (bx, by) = (MARGIN_L, MARGIN_T + ph);
    let _ = writeln!(
        s,
        r#"<path d="M{bx:.1},{MARGIN_T:.1} L{bx:.1},{by:.1} L{:.1},{by:.1}" stroke="black" fill="none"/>"#,
        MARGIN_L + pw
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{by:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, by + 18.0, tick(xv));
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{bx:.1}" y2="{py:.1}" stroke="black"/>"#, bx - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, bx - 8.0, py + 4.0, tick(yv));
    }
    let mut band = String::new();
    for p in pts {
        let _ = write!(band, "{:.2},{:.2} ", sx(p.x), sy(p.mean + sd(p)));
    }
    for p in pts.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", sx(p.x), sy(p.mean - sd(p)));
    }
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
        band.trim_end()
    );
    let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line.join(" ")
    );
    for p in pts {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"><title>x={} mean={} sd={} n={}</title></circle>"##,
            sx(p.x),
            sy(p.mean),
            p.x,
            p.mean,
            p.sd.map_or_else(|| "n/a".to_string(), |v| v.to_string()),
            p.n
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        SVG_H - 10.0,
        esc(&curve.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        esc(&curve.y_label)
    );
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
