//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without a test harness so the lines always print.
//!
//! The reference-metrics check needs external data and prints SKIP unless
//! `DEPTHCUE_REF_PRED` (directory of `<id>.disp.png` + `<id>.disp.json`
//! predictions) and `DEPTHCUE_REF_DATA` (dataset root with
//! `gt/<id>.depth.png`) are both set.

use std::path::{Path, PathBuf};
use std::time::Instant;

use depthcue::geometry::{depth_from_vertical_position, place_at_relative_distance};
use depthcue::imgsynth::paste_object;
use depthcue::metrics::{compute_metrics, EvalConfig, GroundTruth, GtKind, MetricSet};
use depthcue::modelio::wire::{self, check_response, decode_disparity, encode_disparity};
use depthcue::modelio::{ModelEndpoint, ModelioError, OracleMode};
use depthcue::robustfit::{estimate_horizon, ground_region, RansacParams};
use depthcue::runner::*;
use depthcue::{
    BitMask, CameraModel, CenteredCoord, DepthMap, DisparityMap, ImageBuffer, ObjectCutout, PlacementMode, Rgb,
    RgbaImage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 1242;
const H: usize = 375;

// default camera, written out so the oracles below do not lean on the crate
const F: f64 = 700.0;
const B: f64 = 0.54;
const Y: f64 = 1.65;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dataset() -> Dataset {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_dataset");
    let _ = std::fs::remove_dir_all(&root);
    let cfg = SynthConfig {
        n_scenes: 20,
        seed: 2024,
        ..SynthConfig::default()
    };
    Dataset::open(generate_dataset(&root, &cfg).expect("dataset")).expect("open dataset")
}

fn run(kind: ExperimentKind, mode: OracleMode, bracket: bool, data: &Dataset) -> Result<ExperimentReport, String> {
    let mut spec = ExperimentSpec::new(kind, ModelEndpoint::oracle(mode));
    spec.params.bracket = bracket;
    run_experiment(&spec, data, &RunOptions::default()).map_err(|e| e.to_string())
}

fn pitch_bracket(data: &Dataset) -> Outcome {
    let t = Instant::now();
    let r = run(ExperimentKind::PitchCrop, OracleMode::GeometryAware, true, data)?;
    let secs = t.elapsed().as_secs_f64();
    let n = r.trials.len();
    let reg = r.regression.ok_or("no regression")?.rejected;
    let b = r.bracket.ok_or("no bracket")?;
    check(
        n == 140
            && secs < 60.0
            && (reg.slope - 1.0).abs() <= 0.02
            && reg.pearson_r > 0.999
            && b.fixed_prior_slope.abs() <= 0.02,
        format!(
            "{n} trials in {secs:.1} s; geometry-aware slope {:.4} (r {:.5}); fixed-prior slope {:.4}",
            reg.slope, reg.pearson_r, b.fixed_prior_slope
        ),
    )
}

fn roll_bracket(data: &Dataset) -> Outcome {
    let r = run(ExperimentKind::RollCrop, OracleMode::GeometryAware, true, data)?;
    let reg = r.regression.ok_or("no regression")?.rejected;
    let b = r.bracket.ok_or("no bracket")?;
    let ok: Vec<_> = r.trials.iter().filter(|t| t.is_ok()).collect();
    let worst = ok
        .iter()
        .map(|t| (t.estimate.unwrap() - t.truth.unwrap()).abs())
        .fold(0.0f64, f64::max);
    check(
        ok.len() == r.trials.len()
            && (reg.slope - 1.0).abs() <= 0.05
            && worst <= 0.2
            && b.fixed_prior_slope.abs() <= 0.05,
        format!(
            "geometry-aware slope {:.4}; worst angle error {worst:.3} deg over {} trials; fixed-prior slope {:.4}",
            reg.slope,
            ok.len(),
            b.fixed_prior_slope
        ),
    )
}

/// Flat ground at horizon `h` (centered rows), straight from d = B (y - h) / (Y W).
fn ground(h: f64) -> DisparityMap {
    let k = B / (Y * W as f64);
    DisparityMap::from_fn(W, H, |_, row| {
        let y = row as f64 - (H as f64 - 1.0) / 2.0;
        if y > h {
            k * (y - h)
        } else {
            0.0
        }
    })
    .unwrap()
}

fn horizon_fit() -> Outcome {
    let region = ground_region(W, H);
    let params = RansacParams::default();
    let mut worst_clean = 0.0f64;
    for h in [-40.0, -17.5, -3.25, 0.0, 6.0, 22.7, 45.0] {
        let est = estimate_horizon(&ground(h), region, &params, 5).map_err(|e| e.to_string())?;
        worst_clean = worst_clean.max((est.horizon_y - h).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut good = 0;
    for seed in 0..100u64 {
        let h = rng.random_range(-30.0..30.0);
        let clean = ground(h);
        let d_max = clean.max_valid();
        let mut v = clean.values().to_vec();
        for x in v.iter_mut() {
            if rng.random_bool(0.2) {
                *x = rng.random_range(0.0..d_max);
            }
        }
        let map = DisparityMap::new(W, H, v).unwrap();
        let p = RansacParams { seed, ..params };
        if let Ok(est) = estimate_horizon(&map, region, &p, 5) {
            if (est.horizon_y - h).abs() <= 1.0 {
                good += 1;
            }
        }
    }
    check(
        worst_clean <= 0.5 && good >= 95,
        format!("noiseless worst error {worst_clean:.2e} px; {good}/100 corrupted runs within 1 px"),
    )
}

fn position_closed_loop(data: &Dataset) -> Outcome {
    let r = run(ExperimentKind::PositionVsScale, OracleMode::GeometryAware, false, data)?;
    let mut worst = 0.0f64;
    let mut n = 0;
    for t in &r.trials {
        let (Some(rel), Some(est)) = (t.r, t.estimate) else {
            return Err(format!("trial {} did not complete: {:?}", t.family, t.status));
        };
        let want = if t.placement == Some(PlacementMode::ScaleOnly) { 1.0 } else { rel };
        worst = worst.max((est / want - 1.0).abs());
        n += 1;
    }
    let rs: std::collections::BTreeSet<i64> = r.trials.iter().filter_map(|t| t.r).map(|v| (v * 10.0).round() as i64).collect();
    check(
        worst <= 0.02 && rs == (10..=30).collect(),
        format!("{n} trials; worst relative error {:.3}%", 100.0 * worst),
    )
}

/// Per-pixel evaluation written directly from the metric definitions.
fn brute_force(pred: &DisparityMap, gt: &DepthMap, cap: f64, min: f64) -> Option<[f64; 8]> {
    let (mut rows, mut d1) = (Vec::new(), 0usize);
    for row in 0..gt.height() {
        for col in 0..gt.width() {
            let Some(zt) = gt.valid_value(col, row) else { continue };
            if !(zt > min && zt < cap) {
                continue;
            }
            let d = if pred.is_valid(col, row) { pred.get(col, row) } else { 0.0 };
            let z = if d > 0.0 { (F * B / (d * W as f64)).clamp(min, cap) } else { cap };
            let gt_px = F * B / zt;
            let err_px = (d * W as f64 - gt_px).abs();
            if err_px >= 3.0 && err_px >= 0.05 * gt_px {
                d1 += 1;
            }
            rows.push((z, zt));
        }
    }
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| rows.iter().map(|&(z, zt)| f(z, zt)).sum::<f64>() / n;
    let acc = |t: f64| rows.iter().filter(|&&(z, zt)| (z / zt).max(zt / z) < t).count() as f64 / n;
    Some([
        mean(&|z, zt| (z - zt).abs() / zt),
        mean(&|z, zt| (z - zt).powi(2) / zt),
        mean(&|z, zt| (z - zt).powi(2)).sqrt(),
        mean(&|z, zt| (z.ln() - zt.ln()).powi(2)).sqrt(),
        100.0 * d1 as f64 / n,
        acc(1.25),
        acc(1.25 * 1.25),
        acc(1.25 * 1.25 * 1.25),
    ])
}

fn metrics_oracle() -> Outcome {
    let cam = CameraModel::default();
    let cfg = EvalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut nesting = true;
    for _ in 0..1000 {
        let gt: Vec<f64> = (0..256)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.5..95.0) })
            .collect();
        let pred: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..0.12)).collect();
        let valid: Vec<bool> = (0..256).map(|_| !rng.random_bool(0.05)).collect();
        let gt = DepthMap::new(16, 16, gt).unwrap();
        let pred = DisparityMap::with_validity(16, 16, pred, Some(valid)).unwrap();
        let got = compute_metrics(&pred, GroundTruth::Depth(&gt), &cam, &cfg);
        let want = brute_force(&pred, &gt, cfg.depth_cap_m, cfg.min_depth_m);
        match (got, want) {
            (Ok(m), Some(w)) => {
                for (a, b) in m.values().iter().zip(w) {
                    worst = worst.max((a - b).abs());
                }
                nesting &= m.delta1 <= m.delta2 && m.delta2 <= m.delta3;
            }
            (Err(_), None) => {}
            (g, w) => return Err(format!("evaluator disagreement: {g:?} vs {w:?}")),
        }
    }

    let gt = DisparityMap::from_fn(16, 16, |c, r| 0.002 + 0.001 * (c + 16 * r) as f64).unwrap();
    let same = compute_metrics(
        &gt,
        GroundTruth::Disparity(&gt),
        &cam,
        &EvalConfig {
            gt_kind: GtKind::NormalizedDisparity,
            ..cfg
        },
    )
    .map_err(|e| e.to_string())?;
    let identity = same == MetricSet::from_values([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    check(
        worst <= 1e-12 && nesting && identity,
        format!("max deviation {worst:.1e} over 1000 pairs; nesting {nesting}; identity exact {identity}"),
    )
}

fn placement_math() -> Outcome {
    let cam = CameraModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let h = rng.random_range(-60.0..60.0);
        let c = CenteredCoord::new(rng.random_range(-620.0..620.0), h + rng.random_range(0.5..200.0));
        let (a, b) = (rng.random_range(0.25..4.0), rng.random_range(0.25..4.0));
        let pa = place_at_relative_distance(c, h, a).map_err(|e| e.to_string())?;
        // analytic position
        worst = worst.max((pa.contact.x - c.x / a).abs()).max((pa.contact.y - (h + (c.y - h) / a)).abs());
        worst = worst.max((pa.scale - 1.0 / a).abs());
        // depth scales by r
        let z0 = depth_from_vertical_position(&cam, c.y, h).unwrap();
        let za = depth_from_vertical_position(&cam, pa.contact.y, h).unwrap();
        worst = worst.max((za / z0 - a).abs());
        // there and back
        let back = place_at_relative_distance(pa.contact, h, 1.0 / a).unwrap();
        worst = worst.max((back.contact.x - c.x).abs()).max((back.contact.y - c.y).abs());
        // a then b equals a * b
        let ab = place_at_relative_distance(pa.contact, h, b).unwrap();
        let direct = place_at_relative_distance(c, h, a * b).unwrap();
        worst = worst
            .max((ab.contact.x - direct.contact.x).abs())
            .max((ab.contact.y - direct.contact.y).abs())
            .max((pa.scale * ab.scale - direct.scale).abs());
    }

    let cutout = block_cutout();
    let bg = ImageBuffer::new(W, H, Rgb([90, 90, 90])).unwrap();
    let h = -10.0;
    let (mc, mr) = cutout.measure_mask.centroid().unwrap();
    let (mx, my) = (cutout.sprite_origin.x + mc, cutout.sprite_origin.y + mr);
    let mut worst_px = 0.0f64;
    for r in [1.0, 1.5, 2.0, 3.0] {
        let out = paste_object(&bg, &cutout, PlacementMode::PositionAndScale, r, h).map_err(|e| e.to_string())?;
        let (pc, pr) = out.measure_mask.centroid().ok_or("empty measure mask")?;
        let got = CenteredCoord::from_pixel(pc, pr, W, H);
        worst_px = worst_px.max((got.x - mx / r).abs()).max((got.y - (h + (my - h) / r)).abs());
    }
    check(
        worst <= 1e-9 && worst_px <= 1.0,
        format!("max analytic deviation {worst:.1e} over 1e5 samples; centroid off by at most {worst_px:.2} px"),
    )
}

/// An opaque 48x72 block standing at (300, 150) with a centered measurement
/// patch.
fn block_cutout() -> ObjectCutout {
    let (sw, sh) = (48, 72);
    let sprite = RgbaImage::from_fn(sw, sh, |_, _| [200, 40, 40, 255]).unwrap();
    let measure_mask = BitMask::from_fn(sw, sh, |c, r| (12..36).contains(&c) && (20..60).contains(&r));
    let contact = CenteredCoord::new(300.0, 150.0);
    ObjectCutout {
        sprite,
        sprite_origin: CenteredCoord::new(contact.x - (sw as f64 - 1.0) / 2.0, contact.y - (sh as f64 - 1.0)),
        ground_contact: contact,
        source_id: "block".into(),
        class_label: "car".into(),
        placement_slots: vec!["block".into()],
        measure_mask,
    }
}

fn protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..300 {
        let (w, h) = (rng.random_range(1..48), rng.random_range(1..48));
        let scale = rng.random_range(1e-6..0.99);
        let map = DisparityMap::from_fn(w, h, |_, _| rng.random_range(0.0..=scale)).unwrap();
        let bound = map.max_valid() / wire::LEVELS;
        // in memory and through the files
        let (px, side) = encode_disparity(&map);
        let mem = decode_disparity(&px, &side).unwrap();
        let stem = format!("m{i}");
        wire::write_disparity(d, &stem, &map).map_err(|e| e.to_string())?;
        let disk = check_response(d, &stem, Some((w, h))).map_err(|e| e.to_string())?;
        for ((a, b), c) in map.values().iter().zip(mem.values()).zip(disk.values()) {
            if bound > 0.0 {
                worst = worst.max((a - b).abs() / bound).max((a - c).abs() / bound);
            }
        }
    }

    let named = |stem: &str, want: PathBuf| match check_response(d, stem, Some((4, 3))) {
        Err(ModelioError::Protocol { file, .. }) => file == want,
        _ => false,
    };
    let flat = DisparityMap::from_fn(4, 3, |_, _| 0.01).unwrap();
    wire::write_disparity(d, "ok", &flat).unwrap();
    std::fs::copy(wire::disp_png(d, "ok"), wire::disp_png(d, "nojson")).unwrap();
    std::fs::copy(wire::disp_png(d, "ok"), wire::disp_png(d, "badjson")).unwrap();
    std::fs::write(wire::disp_json(d, "badjson"), b"{\"d_max\": ").unwrap();
    std::fs::copy(wire::disp_json(d, "ok"), wire::disp_json(d, "nopng")).unwrap();
    std::fs::copy(wire::disp_json(d, "ok"), wire::disp_json(d, "badpng")).unwrap();
    std::fs::write(wire::disp_png(d, "badpng"), b"not a png").unwrap();
    wire::write_disparity(d, "wrongsize", &DisparityMap::from_fn(5, 3, |_, _| 0.01).unwrap()).unwrap();
    let cases = [
        named("nojson", wire::disp_json(d, "nojson")),
        named("badjson", wire::disp_json(d, "badjson")),
        named("nopng", wire::disp_png(d, "nopng")),
        named("badpng", wire::disp_png(d, "badpng")),
        named("wrongsize", wire::disp_png(d, "wrongsize")),
    ];
    let named_ok = cases.iter().filter(|&&c| c).count();
    check(
        worst <= 1.0 && named_ok == cases.len(),
        format!(
            "worst round-trip error {worst:.3} quantization steps over 300 maps; {named_ok}/{} malformed responses named",
            cases.len()
        ),
    )
}

/// `None` when the external data is not configured.
fn reference_metrics() -> Option<Outcome> {
    let pred = std::env::var_os("DEPTHCUE_REF_PRED")?;
    let data = std::env::var_os("DEPTHCUE_REF_DATA")?;
    let run = || -> Outcome {
        let data = Dataset::open_root(Path::new(&data)).map_err(|e| e.to_string())?;
        let cfg = EvalConfig {
            eval_crop: EvalConfig::GARG_CROP,
            gt_kind: GtKind::DepthM,
            ..EvalConfig::default()
        };
        let conditions = [("Unmodified".to_string(), PathBuf::from(&pred))];
        let scores = evaluate_predictions(&data, &conditions, &CameraModel::default(), &cfg).map_err(|e| e.to_string())?;
        let s = &scores["Unmodified"];
        let m = s.mean;
        check(
            (m.abs_rel - 0.124).abs() <= 0.002 && (m.rmse_m - 6.125).abs() <= 0.05 && (m.delta1 - 0.841).abs() <= 0.005,
            format!(
                "abs rel {:.4}, rmse {:.3} m, delta1 {:.4} over {} images ({} missing)",
                m.abs_rel,
                m.rmse_m,
                m.delta1,
                s.n_images,
                s.missing.len()
            ),
        )
    };
    Some(run())
}

fn main() {
    // `cargo test -- --list` and filters should not trigger the full run
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }

    let data = dataset();
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(d) => println!("PASS {name}: {d}"),
        Err(d) => {
            failed += 1;
            println!("FAIL {name}: {d}");
        }
    };
    report("oracle bracket, pitch", pitch_bracket(&data));
    report("oracle bracket, roll", roll_bracket(&data));
    report("horizon fit", horizon_fit());
    report("position vs scale closed loop", position_closed_loop(&data));
    report("metrics oracle equivalence", metrics_oracle());
    report("placement math", placement_math());
    report("protocol", protocol());
    match reference_metrics() {
        Some(o) => report("reference metrics (external data)", o),
        None => println!("SKIP reference metrics (external data): DEPTHCUE_REF_PRED and DEPTHCUE_REF_DATA not set"),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
