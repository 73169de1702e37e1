//! Trial families: the images one unit of work sends to the model, the
//! trials measured on the answers and how trials are normalized against a
//! reference trial of the same family.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::metrics::{compute_metrics, GroundTruth};
use crate::modelio::{ModelClient, SceneHint};
use crate::pngio;
use crate::raster::{BitMask, DisparityMap, ImageBuffer, Rgb};
use crate::robustfit::{estimate_horizon, estimate_roll, region_mean_disparity};

use super::dataset::GtMap;
use super::spec::ExperimentSpec;
use super::trial::{TrialRecord, TrialStatus};
use super::RunnerError;

pub(crate) struct Query {
    pub image: ImageBuffer,
    pub hint: Option<SceneHint>,
}

pub(crate) enum Measure {
    Horizon,
    Roll,
    MaskMean(BitMask),
    /// Mean under `footprint` minus the same mean on query `background`.
    Detection { footprint: BitMask, background: usize },
    Metrics(Arc<GtMap>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Normalize {
    /// estimate = value
    None,
    /// estimate = value / reference
    OverReference,
    /// estimate = reference / value
    ReferenceOver,
    /// estimate = value - reference
    Difference,
}

pub(crate) struct Planned {
    pub record: TrialRecord,
    pub query: Option<usize>,
    pub measure: Measure,
    /// Index of the trial this one is normalized against.
    pub reference: Option<usize>,
}

pub(crate) struct Family {
    pub queries: Vec<Query>,
    pub trials: Vec<Planned>,
    pub normalize: Normalize,
    /// Write image/disparity panels for these queries when asked to.
    pub panels: bool,
}

impl Family {
    pub fn new(normalize: Normalize) -> Self {
        Self {
            queries: Vec::new(),
            trials: Vec::new(),
            normalize,
            panels: false,
        }
    }

    pub fn push_query(&mut self, image: ImageBuffer, hint: Option<SceneHint>) -> usize {
        self.queries.push(Query { image, hint });
        self.queries.len() - 1
    }

    pub fn push_trial(&mut self, record: TrialRecord, query: usize, measure: Measure, reference: Option<usize>) -> usize {
        self.trials.push(Planned {
            record,
            query: Some(query),
            measure,
            reference,
        });
        self.trials.len() - 1
    }

    /// A trial that could not be synthesized.
    pub fn push_skipped(&mut self, mut record: TrialRecord, reason: impl Into<String>) -> usize {
        record.fail(TrialStatus::Skipped, reason);
        self.trials.push(Planned {
            record,
            query: None,
            measure: Measure::Horizon,
            reference: None,
        });
        self.trials.len() - 1
    }

    /// A family whose inputs could not be loaded at all.
    pub fn failed(record: TrialRecord, reason: impl Into<String>) -> Self {
        let mut f = Family::new(Normalize::None);
        f.push_skipped(record, reason);
        f
    }
}

pub(crate) struct Ctx<'a> {
    pub spec: &'a ExperimentSpec,
    pub client: &'a ModelClient,
    pub panels_dir: Option<&'a Path>,
}

fn hint_seed(base: u64, family: usize, query: usize) -> u64 {
    base.wrapping_add((family as u64) << 20).wrapping_add(query as u64)
}

fn query_model(ctx: &Ctx<'_>, fam_idx: usize, queries: &mut [Query]) -> Result<Vec<DisparityMap>, String> {
    for (k, q) in queries.iter_mut().enumerate() {
        if let Some(h) = &mut q.hint {
            h.seed = hint_seed(ctx.spec.seed, fam_idx, k);
        }
    }
    let all_hinted = queries.iter().all(|q| q.hint.is_some());
    if ctx.client.endpoint().is_oracle() && !all_hinted {
        return Err("no scene geometry to drive the oracle".into());
    }
    let max = ctx.client.endpoint().max_batch.max(1);
    let mut out = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(max) {
        let images: Vec<&ImageBuffer> = chunk.iter().map(|q| &q.image).collect();
        let hints: Option<Vec<SceneHint>> = all_hinted.then(|| chunk.iter().filter_map(|q| q.hint.clone()).collect());
        let maps = ctx
            .client
            .request_disparity(&images, hints.as_deref())
            .map_err(|e| e.to_string())?;
        out.extend(maps);
    }
    Ok(out)
}

fn measure(ctx: &Ctx<'_>, t: &mut TrialRecord, m: &Measure, map: &DisparityMap, maps: &[DisparityMap]) -> Result<(), String> {
    let p = &ctx.spec.params;
    match m {
        Measure::Horizon => {
            let region = p.ground_region.resolve(map.width(), map.height());
            let est = estimate_horizon(map, region, &p.ransac, p.horizon_repeats).map_err(|e| e.to_string())?;
            t.horizon_y = Some(est.horizon_y);
            t.horizon_spread = Some(est.spread);
            t.estimate = Some(est.horizon_y);
        }
        Measure::Roll => {
            let est = estimate_roll(map, p.band, &p.hough).map_err(|e| e.to_string())?;
            t.roll_deg = Some(est.angle_deg);
            t.estimate = Some(est.angle_deg);
        }
        Measure::MaskMean(mask) => {
            let d = region_mean_disparity(map, mask).map_err(|e| e.to_string())?;
            t.region_mean_disparity = Some(d);
            t.estimate = Some(d);
        }
        Measure::Detection { footprint, background } => {
            let on = region_mean_disparity(map, footprint).map_err(|e| e.to_string())?;
            let off = region_mean_disparity(&maps[*background], footprint).map_err(|e| e.to_string())?;
            t.region_mean_disparity = Some(on);
            t.detection_score = Some(on - off);
            t.estimate = Some(on - off);
        }
        Measure::Metrics(gt) => {
            let g = match gt.as_ref() {
                GtMap::Depth(d) => GroundTruth::Depth(d),
                GtMap::Disparity(d) => GroundTruth::Disparity(d),
            };
            let m = compute_metrics(map, g, &p.camera, &p.eval).map_err(|e| e.to_string())?;
            t.metrics = Some(m);
        }
    }
    Ok(())
}

fn normalize(trials: &mut [Planned], how: Normalize) {
    if how == Normalize::None {
        return;
    }
    let refs: Vec<Option<Result<f64, String>>> = trials
        .iter()
        .map(|p| {
            p.reference.map(|r| {
                let rt = &trials[r].record;
                match (rt.status, rt.estimate) {
                    (TrialStatus::Ok, Some(v)) => Ok(v),
                    _ => Err(format!("reference trial failed ({}: {})", rt.status, rt.reason)),
                }
            })
        })
        .collect();
    for (p, r) in trials.iter_mut().zip(refs) {
        let t = &mut p.record;
        if !t.is_ok() {
            continue;
        }
        let Some(r) = r else {
            t.estimate = None;
            t.fail(TrialStatus::Skipped, "no reference trial");
            continue;
        };
        let (Ok(rv), Some(v)) = (r.clone(), t.estimate) else {
            t.estimate = None;
            t.fail(TrialStatus::Skipped, r.err().unwrap_or_else(|| "no measurement".into()));
            continue;
        };
        let est = match how {
            Normalize::OverReference => v / rv,
            Normalize::ReferenceOver => rv / v,
            Normalize::Difference => v - rv,
            Normalize::None => v,
        };
        if est.is_finite() {
            t.estimate = Some(est);
        } else {
            t.estimate = None;
            t.fail(TrialStatus::FitError, format!("normalization by {rv} is not finite"));
        }
    }
}

fn write_panels(dir: &Path, name: &str, queries: &[Query], maps: &[DisparityMap]) {
    for (k, (q, m)) in queries.iter().zip(maps).enumerate() {
        let (w, h) = (q.image.width(), q.image.height());
        let top = m.max_valid().max(1e-12);
        let panel = ImageBuffer::from_fn(2 * w, h, |c, r| {
            if c < w {
                q.image.get(c, r)
            } else {
                let v = m.valid_value(c - w, r).map_or(0.0, |d| d / top);
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                Rgb([g, g, g])
            }
        });
        let path = dir.join(format!("{}_{k}.png", slug(name)));
        if let Err(e) = panel.map_err(|e| e.to_string()).and_then(|p| pngio::write_rgb(&path, &p).map_err(|e| e.to_string())) {
            log::warn!("could not write panel {}: {e}", path.display());
        }
    }
}

pub(crate) fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn execute(ctx: &Ctx<'_>, fam_idx: usize, mut fam: Family) -> Vec<TrialRecord> {
    let needs_model = fam.trials.iter().any(|t| t.query.is_some() && t.record.is_ok());
    if needs_model {
        match query_model(ctx, fam_idx, &mut fam.queries) {
            Err(reason) => {
                let status = if reason.starts_with("no scene geometry") {
                    TrialStatus::Skipped
                } else {
                    TrialStatus::ModelError
                };
                for t in fam.trials.iter_mut().filter(|t| t.query.is_some() && t.record.is_ok()) {
                    t.record.fail(status, reason.clone());
                }
            }
            Ok(maps) => {
                if let (true, Some(dir)) = (fam.panels, ctx.panels_dir) {
                    let name = fam.trials.first().map_or("panel".to_string(), |t| t.record.family.clone());
                    write_panels(dir, &name, &fam.queries, &maps);
                }
                for t in fam.trials.iter_mut() {
                    let Some(q) = t.query else { continue };
                    if !t.record.is_ok() {
                        continue;
                    }
                    if let Err(reason) = measure(ctx, &mut t.record, &t.measure, &maps[q], &maps) {
                        t.record.fail(TrialStatus::FitError, reason);
                    }
                }
            }
        }
    }
    normalize(&mut fam.trials, fam.normalize);
    fam.trials.into_iter().map(|t| t.record).collect()
}

/// Plan and execute every family on the pool, keeping key order.
pub(crate) fn run_families<K: Sync>(
    ctx: &Ctx<'_>,
    pool: &rayon::ThreadPool,
    keys: &[K],
    plan: impl Fn(&K) -> Family + Sync,
) -> Vec<TrialRecord> {
    let per_family: Vec<Vec<TrialRecord>> = pool.install(|| {
        keys.par_iter()
            .enumerate()
            .map(|(i, k)| execute(ctx, i, plan(k)))
            .collect()
    });
    per_family.into_iter().flatten().collect()
}

/// Write every image a plan would send to the model; returns the count.
pub(crate) fn write_planned<K>(keys: &[K], plan: impl Fn(&K) -> Family, out_dir: &Path) -> Result<usize, RunnerError> {
    std::fs::create_dir_all(out_dir).map_err(|e| RunnerError::io(out_dir, e))?;
    let mut n = 0;
    for k in keys {
        let fam = plan(k);
        let name = fam.trials.first().map_or("family".to_string(), |t| t.record.family.clone());
        for t in fam.trials.iter().filter(|t| !t.record.is_ok()) {
            log::warn!("{}: {}", t.record.family, t.record.reason);
        }
        for (i, q) in fam.queries.iter().enumerate() {
            let p = out_dir.join(format!("{}_{i:03}.png", slug(&name)));
            pngio::write_rgb(&p, &q.image).map_err(|e| RunnerError::Dataset(e.to_string()))?;
            n += 1;
        }
    }
    Ok(n)
}
