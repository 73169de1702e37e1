use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use depthcue::geometry::{CameraModel, GroundPlaneModel};
use depthcue::metrics::{compare_metric_rows, write_metrics_csv, EvalConfig, GtKind, MetricSet};
use depthcue::modelio::stub::{self, StubMode};
use depthcue::modelio::{render_oracle, wire, ModelEndpoint, OracleMode, OracleSpec};
use depthcue::robustfit::{estimate_horizon, estimate_roll, DisparityBand, HoughParams, RansacParams, ground_region};
use depthcue::runner::{
    emit_report, evaluate_predictions, generate_dataset, rebuild_report, run_experiment, write_manipulated_images,
    Dataset, ExperimentKind, ExperimentReport, ExperimentSpec, RunOptions, SynthConfig, DATASET_ENV,
};

#[derive(Parser)]
#[command(name = "depthcue", version, about = "Probe which depth cues a monocular depth model uses")]
struct Cli {
    /// Dataset root (images/, cutouts/, semantic/, gt/, obstacles/).
    #[arg(long, global = true, env = DATASET_ENV)]
    dataset: Option<PathBuf>,
    /// Overrides the seed of the experiment config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent trial families (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `oracle:geometry-aware`, `oracle:fixed-prior`, `dir:<path>` or an
    /// adapter command line.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset whose geometry is known exactly.
    GenDataset {
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 10.0)]
        horizon_jitter: f64,
    },
    /// Write the manipulated images of an experiment without a model.
    Synth {
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one experiment and write report.json, trials.csv and plots.
    Probe {
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Write image/disparity panels of the recognition probes.
        #[arg(long)]
        panels: bool,
        /// Skip the extra oracle runs of the pitch and roll crops.
        #[arg(long)]
        no_bracket: bool,
    },
    /// Score precomputed disparity maps per condition against the dataset's
    /// ground truth.
    Metrics {
        /// `NAME=DIR`; DIR holds `<id>.disp.png` and `<id>.disp.json`.
        #[arg(long = "pred", value_parser = parse_condition, required = true)]
        pred: Vec<(String, PathBuf)>,
        #[arg(long, value_enum, default_value_t = GtArg::Depth)]
        gt: GtArg,
        #[arg(long, default_value_t = 80.0)]
        cap: f64,
        /// Evaluate on the usual KITTI crop only.
        #[arg(long)]
        garg_crop: bool,
        /// Write metrics.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the horizon or roll of one disparity map.
    Fit {
        #[arg(value_enum)]
        what: FitWhat,
        /// `<stem>.disp.png`, `<stem>.disp.json` or the bare stem.
        map: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0.030)]
        band_lo: f64,
        #[arg(long, default_value_t = 0.031)]
        band_hi: f64,
    },
    /// Render an oracle disparity map in wire format.
    Oracle {
        /// Output stem; writes `<stem>.disp.png` and `<stem>.disp.json`.
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        horizon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        roll: f64,
        #[arg(long, default_value_t = 1242)]
        width: usize,
        #[arg(long, default_value_t = 375)]
        height: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Re-emit a report from its trials.csv and report.json.
    Report {
        dir: PathBuf,
        /// Defaults to DIR.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve an exchange directory with a stub model (`echo` or
    /// `constant:<v>`).
    StubAdapter {
        #[arg(long, default_value = "echo")]
        stub: StubMode,
        exchange: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GtArg {
    Depth,
    Disparity,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitWhat {
    Horizon,
    Roll,
}

fn parse_condition(s: &str) -> Result<(String, PathBuf), String> {
    let (name, dir) = s.split_once('=').ok_or_else(|| format!("expected NAME=DIR, got {s:?}"))?;
    if name.is_empty() || dir.is_empty() {
        return Err(format!("expected NAME=DIR, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(dir)))
}

fn split_stem(path: &Path) -> Result<(PathBuf, String)> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("bad map path {}", path.display()))?;
    let stem = name
        .strip_suffix(".disp.png")
        .or_else(|| name.strip_suffix(".disp.json"))
        .unwrap_or(name);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Ok((dir.to_path_buf(), stem.to_string()))
}

impl Cli {
    fn dataset(&self) -> Result<Dataset> {
        let root = self
            .dataset
            .as_ref()
            .with_context(|| format!("no dataset; pass --dataset or set {DATASET_ENV}"))?;
        Ok(Dataset::open_root(root)?)
    }

    fn spec(&self, kind: ExperimentKind, config: Option<&Path>) -> Result<ExperimentSpec> {
        let mut spec = match config {
            Some(p) => {
                let s = ExperimentSpec::load(p)?;
                if s.kind != kind {
                    bail!("{} configures {}, not {kind}", p.display(), s.kind);
                }
                s
            }
            None => ExperimentSpec::new(kind, ModelEndpoint::oracle(OracleMode::GeometryAware)),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(ep) = &self.endpoint {
            spec.endpoint = ModelEndpoint::parse(ep)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn summarize(r: &ExperimentReport) {
    let counts: Vec<String> = r.status_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}: {}", r.spec.kind, counts.join(" "));
    if let Some(g) = &r.regression {
        println!(
            "regression: slope {:.4} r {:.4} n {} ({} outliers removed); raw slope {:.4}",
            g.rejected.slope, g.rejected.pearson_r, g.rejected.n_points, g.rejected.n_outliers_removed, g.raw.slope
        );
    }
    if let Some(b) = &r.bracket {
        println!(
            "bracket: fixed prior {:.4} <= endpoint {:.4} <= geometry aware {:.4}: {}",
            b.fixed_prior_slope, b.endpoint_slope, b.geometry_aware_slope, b.within
        );
    }
    for c in &r.curves {
        let pts: Vec<String> = c.points.iter().map(|p| format!("{}:{:.4}", p.x, p.mean)).collect();
        println!("{}: {}", c.series, pts.join(" "));
    }
    for c in &r.categories {
        println!("{} {}: {:.6} (n {})", c.quantity, c.category, c.mean, c.n);
    }
    for (cond, reason) in &r.skipped_conditions {
        println!("skipped {cond}: {reason}");
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match &cli.cmd {
        Cmd::GenDataset {
            out,
            scenes,
            horizon_jitter,
        } => {
            let cfg = SynthConfig {
                n_scenes: *scenes,
                seed: cli.seed.unwrap_or(0),
                horizon_jitter_px: *horizon_jitter,
                ..SynthConfig::default()
            };
            generate_dataset(out, &cfg)?;
            println!("wrote {scenes} scenes to {}", out.display());
        }
        Cmd::Synth { kind, config, out } => {
            let spec = cli.spec(*kind, config.as_deref())?;
            let n = write_manipulated_images(&spec, &cli.dataset()?, out)?;
            println!("wrote {n} images to {}", out.display());
        }
        Cmd::Probe {
            kind,
            config,
            out,
            panels,
            no_bracket,
        } => {
            let mut spec = cli.spec(*kind, config.as_deref())?;
            if *no_bracket {
                spec.params.bracket = false;
            }
            let opts = RunOptions {
                workers: cli.workers,
                panels_dir: panels.then(|| out.join("panels")),
            };
            let report = run_experiment(&spec, &cli.dataset()?, &opts)?;
            emit_report(&report, out)?;
            summarize(&report);
        }
        Cmd::Metrics {
            pred,
            gt,
            cap,
            garg_crop,
            out,
        } => {
            let mut cfg = EvalConfig {
                depth_cap_m: *cap,
                gt_kind: match gt {
                    GtArg::Depth => GtKind::DepthM,
                    GtArg::Disparity => GtKind::NormalizedDisparity,
                },
                ..EvalConfig::default()
            };
            if *garg_crop {
                cfg.eval_crop = EvalConfig::GARG_CROP;
            }
            let scores = evaluate_predictions(&cli.dataset()?, pred, &CameraModel::default(), &cfg)?;
            let rows: Vec<(String, MetricSet)> = scores.iter().map(|(k, s)| (k.clone(), s.mean)).collect();
            write_metrics_csv(std::io::stdout().lock(), &rows)?;
            for (name, s) in &scores {
                if !s.missing.is_empty() {
                    log::warn!("{name}: {} of the ground-truth images have no prediction", s.missing.len());
                }
            }
            if let Some(path) = out {
                let file = std::fs::File::create(path).with_context(|| path.display().to_string())?;
                write_metrics_csv(file, &rows)?;
            }
            let table: BTreeMap<String, MetricSet> = rows.into_iter().collect();
            if table.len() > 1 {
                match compare_metric_rows(&table) {
                    Ok(c) => println!("{}", serde_json::to_string_pretty(&c)?),
                    Err(e) => log::warn!("no comparison: {e}"),
                }
            }
        }
        Cmd::Fit {
            what,
            map,
            repeats,
            band_lo,
            band_hi,
        } => {
            let (dir, stem) = split_stem(map)?;
            let m = wire::check_response(&dir, &stem, None)?;
            let json = match what {
                FitWhat::Horizon => {
                    let region = ground_region(m.width(), m.height());
                    let est = estimate_horizon(&m, region, &RansacParams::default(), *repeats)?;
                    serde_json::to_string_pretty(&est)?
                }
                FitWhat::Roll => {
                    let band = DisparityBand {
                        lo: *band_lo,
                        hi: *band_hi,
                    };
                    serde_json::to_string_pretty(&estimate_roll(&m, band, &HoughParams::default())?)?
                }
            };
            println!("{json}");
        }
        Cmd::Oracle {
            out,
            horizon,
            roll,
            width,
            height,
            noise,
        } => {
            let mut spec = OracleSpec::geometry_aware(GroundPlaneModel::new(CameraModel::default(), *horizon).with_roll(*roll));
            spec.noise_sd = *noise;
            let map = render_oracle(&spec, *width, *height, cli.seed.unwrap_or(0))?;
            let (dir, stem) = split_stem(out)?;
            std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
            wire::write_disparity(&dir, &stem, &map)?;
            println!("{}", wire::disp_png(&dir, &stem).display());
        }
        Cmd::Report { dir, out } => {
            let report = rebuild_report(dir)?;
            let files = emit_report(&report, out.as_deref().unwrap_or(dir))?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Cmd::StubAdapter { stub, exchange } => {
            stub::serve(exchange, *stub, Duration::from_millis(5))?;
        }
    }
    Ok(())
}
