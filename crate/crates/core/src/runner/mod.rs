//! Experiment orchestration: dataset ingestion, the preset experiments,
//! trial bookkeeping and report emission.

pub mod dataset;
mod evaluate;
mod exec;
mod experiments;
mod hints;
pub mod report;
pub mod spec;
pub mod synthetic;
pub mod trial;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imgsynth::{class_mean_colors, ClassColors, PhotometricMode, SynthError};
use crate::modelio::{EndpointKind, ModelClient, ModelEndpoint, ModelioError, OracleMode};
use crate::raster::RasterError;

pub use dataset::{write_depth_png, Dataset, DatasetLayout, GtMap, SceneTruth, DATASET_ENV};
pub use evaluate::{evaluate_predictions, ConditionScore};
pub use report::{
    curve_svg, emit_report, rebuild_report, Bracket, CategoryStat, Curve, CurvePoint, ExperimentReport, Provenance,
    RegressionPair,
};
pub use spec::{ExperimentKind, ExperimentParams, ExperimentSpec, ProbeDef, SCHEMA_VERSION};
pub use synthetic::{generate_dataset, SynthConfig};
pub use trial::{read_trials_csv, write_trials_csv, TrialRecord, TrialStatus};

use exec::{run_families, write_planned, Ctx, Family};
use experiments as ex;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("table error: {0}")]
    Csv(String),
    #[error("regression error: {0}")]
    Regression(String),
    #[error("experiment aborted: {0}")]
    AllTrialsFailed(String),
    #[error(transparent)]
    Model(#[from] ModelioError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl RunnerError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunnerError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Concurrent trial families; `None` uses one per core.
    pub workers: Option<usize>,
    /// Where recognition probes write image/disparity panels.
    pub panels_dir: Option<PathBuf>,
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, RunnerError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| RunnerError::Config(format!("worker pool: {e}")))
}

fn class_colors(data: &Dataset) -> Result<Option<ClassColors>, RunnerError> {
    let mut pairs = Vec::new();
    for id in data.ids() {
        if let Some(sem) = data.semantic(id)? {
            pairs.push((data.image(id)?, sem));
        }
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    Ok(Some(class_mean_colors(pairs.iter().map(|(i, s)| (i, s)))?))
}

/// Consumer of planned families: either runs them or writes their images.
trait FamilySink {
    type Out;
    fn take<K: Sync>(&self, keys: &[K], plan: impl Fn(&K) -> Family + Sync) -> Self::Out;
}

struct Execute<'a> {
    ctx: Ctx<'a>,
    pool: rayon::ThreadPool,
}

impl FamilySink for Execute<'_> {
    type Out = Vec<TrialRecord>;
    fn take<K: Sync>(&self, keys: &[K], plan: impl Fn(&K) -> Family + Sync) -> Self::Out {
        run_families(&self.ctx, &self.pool, keys, plan)
    }
}

struct WriteImages<'a>(&'a Path);

impl FamilySink for WriteImages<'_> {
    type Out = Result<usize, RunnerError>;
    fn take<K: Sync>(&self, keys: &[K], plan: impl Fn(&K) -> Family + Sync) -> Self::Out {
        write_planned(keys, plan, self.0)
    }
}

fn dispatch<S: FamilySink>(spec: &ExperimentSpec, data: &Dataset, sink: &S) -> Result<S::Out, RunnerError> {
    let p = &spec.params;
    let ids = data.ids();
    let cutouts = match spec.kind {
        ExperimentKind::PositionVsScale | ExperimentKind::RecognitionProbes | ExperimentKind::ContextAndFlip => {
            data.cutouts()?
        }
        _ => Vec::new(),
    };
    if spec.kind == ExperimentKind::PositionVsScale && cutouts.is_empty() {
        return Err(RunnerError::Dataset("the experiment needs cutouts and the library is empty".into()));
    }
    Ok(match spec.kind {
        ExperimentKind::PitchCrop => sink.take(ids, |id| ex::plan_pitch(data, p, id, false)),
        ExperimentKind::PitchVsObstacleDisparity => sink.take(ids, |id| ex::plan_pitch(data, p, id, true)),
        ExperimentKind::PitchHorizonNatural => sink.take(ids, |id| ex::plan_pitch_natural(data, p, id)),
        ExperimentKind::RollCrop => sink.take(ids, |id| ex::plan_roll(data, p, id)),
        ExperimentKind::PositionVsScale => {
            let keys = ex::paste_keys(&cutouts, data, &p.placement_modes);
            sink.take(&keys, |k| ex::plan_position(data, p, &cutouts, k))
        }
        ExperimentKind::PhotometricSuite => {
            let colors = if p.photometric_modes.contains(&PhotometricMode::ClassAverageColors) {
                class_colors(data)?
            } else {
                None
            };
            sink.take(ids, |id| ex::plan_photometric(data, p, colors.as_ref(), id))
        }
        ExperimentKind::RecognitionProbes => {
            let keys = ex::probe_keys(&p.probes, &cutouts, data);
            sink.take(&keys, |k| ex::plan_probe(data, p, &cutouts, k))
        }
        ExperimentKind::ContextAndFlip => {
            let keys = ex::context_keys(&cutouts, data);
            sink.take(&keys, |k| ex::plan_context(data, p, &cutouts, k))
        }
    })
}

fn run_trials(spec: &ExperimentSpec, data: &Dataset, opts: &RunOptions) -> Result<Vec<TrialRecord>, RunnerError> {
    let client = ModelClient::new(spec.endpoint.clone())?;
    if let Some(d) = &opts.panels_dir {
        std::fs::create_dir_all(d).map_err(|e| RunnerError::io(d, e))?;
    }
    let sink = Execute {
        ctx: Ctx {
            spec,
            client: &client,
            panels_dir: opts.panels_dir.as_deref(),
        },
        pool: pool(opts.workers)?,
    };
    let trials = dispatch(spec, data, &sink);
    client.shutdown();
    trials
}

fn oracle_mode(ep: &ModelEndpoint) -> Option<OracleMode> {
    match ep.kind {
        EndpointKind::BuiltinOracle { mode, noise_sd: None } => Some(mode),
        _ => None,
    }
}

fn bracket(
    spec: &ExperimentSpec,
    data: &Dataset,
    opts: &RunOptions,
    own: &ExperimentReport,
) -> Option<Bracket> {
    let own_slope = own.regression?.rejected.slope;
    let slope_of = |mode: OracleMode| -> Option<f64> {
        if oracle_mode(&spec.endpoint) == Some(mode) {
            return Some(own_slope);
        }
        let mut s = spec.clone();
        s.endpoint = ModelEndpoint::oracle(mode);
        s.params.bracket = false;
        let quiet = RunOptions {
            workers: opts.workers,
            panels_dir: None,
        };
        match run_experiment(&s, data, &quiet) {
            Ok(r) => r.regression.map(|g| g.rejected.slope),
            Err(e) => {
                log::warn!("bracket run with the {mode:?} oracle failed: {e}");
                None
            }
        }
    };
    Some(Bracket::new(
        slope_of(OracleMode::FixedPrior)?,
        slope_of(OracleMode::GeometryAware)?,
        own_slope,
    ))
}

/// Run one experiment end to end. Individual trial failures are recorded in
/// the report; the run fails only on bad configuration, when no trial
/// succeeds, or when the headline regression cannot be computed.
pub fn run_experiment(spec: &ExperimentSpec, data: &Dataset, opts: &RunOptions) -> Result<ExperimentReport, RunnerError> {
    spec.validate()?;
    let trials = run_trials(spec, data, opts)?;
    let provenance = Provenance::new(spec, data.ids().len());
    let mut report = ExperimentReport::from_trials(spec.clone(), provenance, trials, None)?;
    if spec.params.bracket && matches!(spec.kind, ExperimentKind::PitchCrop | ExperimentKind::RollCrop) {
        report.bracket = bracket(spec, data, opts, &report);
    }
    Ok(report)
}

/// Write the manipulated images an experiment would send to the model,
/// without querying anything. Returns the number of images.
pub fn write_manipulated_images(spec: &ExperimentSpec, data: &Dataset, out_dir: &Path) -> Result<usize, RunnerError> {
    spec.validate()?;
    dispatch(spec, data, &WriteImages(out_dir))?
}
