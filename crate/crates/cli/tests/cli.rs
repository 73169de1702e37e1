use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_depthcue");

fn depthcue(args: &[&str]) -> Output {
    Command::new(EXE)
        .args(args)
        .env_remove("DEPTHCUE_DATASET")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = depthcue(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path, scenes: usize) -> PathBuf {
    let root = dir.join("data");
    ok(&["gen-dataset", s(&root), "--scenes", &scenes.to_string(), "--seed", "4"]);
    root
}

fn report_json(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn probe_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 2);
    let out = tmp.path().join("roll");
    let stdout = ok(&["--dataset", s(&data), "probe", "roll-crop", "-o", s(&out), "--no-bracket"]);
    assert!(stdout.contains("regression: slope"), "{stdout}");
    for f in ["report.json", "trials.csv", "curve_roll_change.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let slope = report_json(&out)["regression"]["rejected"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() <= 0.05, "{slope}");

    // re-emitting from the table reproduces it
    let again = tmp.path().join("again");
    ok(&["report", s(&out), "-o", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("trials.csv")).unwrap(),
        std::fs::read(again.join("trials.csv")).unwrap()
    );
}

#[test]
fn stub_adapter_subprocess_matches_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 2);
    let echo = tmp.path().join("echo");
    let endpoint = format!("{EXE} stub-adapter --stub echo");
    ok(&[
        "--dataset",
        s(&data),
        "--endpoint",
        &endpoint,
        "probe",
        "pitch_crop",
        "-o",
        s(&echo),
        "--no-bracket",
    ]);
    let oracle = tmp.path().join("oracle");
    ok(&["--dataset", s(&data), "probe", "pitch_crop", "-o", s(&oracle), "--no-bracket"]);
    let a = report_json(&echo);
    let b = report_json(&oracle);
    let slope = |v: &serde_json::Value| v["regression"]["rejected"]["slope"].as_f64().unwrap();
    assert!((slope(&a) - slope(&b)).abs() < 0.01, "{} vs {}", slope(&a), slope(&b));
    assert_eq!(a["status_counts"], b["status_counts"]);
}

#[test]
fn env_var_names_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let out = tmp.path().join("imgs");
    let o = Command::new(EXE)
        .args(["synth", "roll_crop", "-o", s(&out)])
        .env("DEPTHCUE_DATASET", &data)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 7);
}

#[test]
fn oracle_then_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let level = tmp.path().join("maps/level");
    ok(&["oracle", s(&level), "--horizon", "-7.5"]);
    let png = tmp.path().join("maps/level.disp.png");
    let h: serde_json::Value = serde_json::from_str(&ok(&["fit", "horizon", s(&png)])).unwrap();
    assert!((h["horizon_y"].as_f64().unwrap() + 7.5).abs() < 0.5, "{h}");

    let tilted = tmp.path().join("maps/tilted");
    ok(&["oracle", s(&tilted), "--horizon", "-7.5", "--roll", "1.5"]);
    let r: serde_json::Value = serde_json::from_str(&ok(&["fit", "roll", s(&tilted)])).unwrap();
    assert!((r["angle_deg"].as_f64().unwrap() - 1.5).abs() < 0.2, "{r}");
}

#[test]
fn metrics_of_ground_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 2);
    let csv = tmp.path().join("metrics.csv");
    let pred = format!("Unmodified={}", s(&data.join("gt")));
    let stdout = ok(&["--dataset", s(&data), "metrics", "--pred", &pred, "--gt", "disparity", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(stdout, text);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "Unmodified");
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn config_file_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), 1);
    let cfg = tmp.path().join("roll.toml");
    std::fs::write(
        &cfg,
        "kind = \"roll_crop\"\nseed = 3\n\n[endpoint]\nkind = \"builtin_oracle\"\nmode = \"FixedPrior\"\n\n[params]\nroll_angles_deg = [-1.0, 0.0, 1.0]\nbracket = false\n",
    )
    .unwrap();
    let out = tmp.path().join("r");
    ok(&["--dataset", s(&data), "--seed", "9", "probe", "roll_crop", "--config", s(&cfg), "-o", s(&out)]);
    let r = report_json(&out);
    assert_eq!(r["spec"]["seed"], 9);
    assert_eq!(r["trials"].as_array().unwrap().len(), 3);
    assert_eq!(r["regression"]["rejected"]["slope"].as_f64().unwrap(), 0.0);

    let wrong = depthcue(&["--dataset", s(&data), "probe", "pitch_crop", "--config", s(&cfg), "-o", s(&out)]);
    assert!(!wrong.status.success());
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("roll_crop"));
}

#[test]
fn helpful_failures() {
    let no_data = depthcue(&["probe", "pitch_crop", "-o", "/tmp/never"]);
    assert!(!no_data.status.success());
    assert!(String::from_utf8_lossy(&no_data.stderr).contains("DEPTHCUE_DATASET"));

    let bad_kind = depthcue(&["probe", "tilt", "-o", "/tmp/never"]);
    assert!(!bad_kind.status.success());
    assert!(String::from_utf8_lossy(&bad_kind.stderr).contains("pitch_crop"));

    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("x.disp.png"), b"nope").unwrap();
    std::fs::write(tmp.path().join("x.disp.json"), br#"{"d_max":0.1,"width":2,"height":2}"#).unwrap();
    let bad_map = depthcue(&["fit", "horizon", s(&tmp.path().join("x"))]);
    assert!(!bad_map.status.success());
    assert!(String::from_utf8_lossy(&bad_map.stderr).contains("x.disp.png"));
}
