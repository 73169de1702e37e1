//! Exchange-directory protocol against the bundled stub adapter and
//! hand-made malformed responses.

use std::path::{Path, PathBuf};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use depthcue::modelio::stub::{serve, StubMode};
use depthcue::modelio::wire::{self, check_response, decode_disparity, encode_disparity, RequestImage, RequestManifest};
use depthcue::modelio::ModelioError;
use depthcue::{DisparityMap, ImageBuffer, Rgb};
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The map the golden PNG was quantized from, written out at full precision.
fn golden_values() -> DisparityMap {
    let text = std::fs::read_to_string(fixtures().join("golden.values.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    let (w, h) = (rows[0].len(), rows.len());
    DisparityMap::new(w, h, rows.into_iter().flatten().collect()).unwrap()
}

fn assert_within_step(got: &DisparityMap, want: &DisparityMap) {
    assert_eq!((got.width(), got.height()), (want.width(), want.height()));
    let step = want.max_valid() / wire::LEVELS;
    for (a, b) in got.values().iter().zip(want.values()) {
        assert!((a - b).abs() <= step, "{a} vs {b}, step {step}");
    }
}

fn copy_golden(dir: &Path, stem: &str) {
    std::fs::copy(fixtures().join("golden.disp.png"), wire::disp_png(dir, stem)).unwrap();
    std::fs::copy(fixtures().join("golden.disp.json"), wire::disp_json(dir, stem)).unwrap();
}

fn start(dir: &Path, mode: StubMode) -> JoinHandle<Result<(), ModelioError>> {
    let path = dir.to_path_buf();
    std::thread::spawn(move || serve(&path, mode, Duration::from_millis(1)))
}

fn wait_for(path: &Path) {
    let t = Instant::now();
    while !path.exists() {
        assert!(t.elapsed() < Duration::from_secs(10), "no {}", path.display());
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn stop(dir: &Path, server: JoinHandle<Result<(), ModelioError>>) {
    std::fs::write(dir.join(wire::SHUTDOWN), b"").unwrap();
    server.join().unwrap().unwrap();
}

#[test]
fn golden_fixture_decodes_to_its_source_values() {
    let got = check_response(&fixtures(), "golden", Some((24, 12))).unwrap();
    assert_within_step(&got, &golden_values());
}

#[test]
fn echo_stub_round_trips_the_golden_map() {
    let dir = tempfile::tempdir().unwrap();
    copy_golden(dir.path(), "b0_000.ref");
    let img = ImageBuffer::new(24, 12, Rgb::WHITE).unwrap();
    let manifest = RequestManifest {
        batch_id: "b0".into(),
        images: vec![RequestImage {
            image: "b0_000.png".into(),
            reference: Some("b0_000.ref".into()),
        }],
    };
    let server = start(dir.path(), StubMode::Echo);
    wire::write_request(dir.path(), &manifest, &[&img]).unwrap();
    wait_for(&wire::done_file(dir.path(), "b0_000"));
    let got = check_response(dir.path(), "b0_000", Some((24, 12))).unwrap();
    assert_within_step(&got, &golden_values());
    stop(dir.path(), server);
}

#[test]
fn constant_stub_answers_the_configured_value() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuffer::new(9, 7, Rgb::BLACK).unwrap();
    let manifest = RequestManifest {
        batch_id: "b1".into(),
        images: vec![RequestImage {
            image: "b1_000.png".into(),
            reference: None,
        }],
    };
    let server = start(dir.path(), StubMode::Constant(0.0125));
    wire::write_request(dir.path(), &manifest, &[&img]).unwrap();
    wait_for(&wire::done_file(dir.path(), "b1_000"));
    let got = check_response(dir.path(), "b1_000", Some((9, 7))).unwrap();
    assert!(got.values().iter().all(|&v| (v - 0.0125).abs() <= 0.0125 / wire::LEVELS));
    stop(dir.path(), server);
}

fn protocol_file(e: ModelioError) -> PathBuf {
    match e {
        ModelioError::Protocol { file, .. } => file,
        other => panic!("expected a protocol error, got {other:?}"),
    }
}

#[test]
fn malformed_responses_name_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // sidecar missing
    std::fs::copy(fixtures().join("golden.disp.png"), wire::disp_png(d, "a")).unwrap();
    assert_eq!(protocol_file(check_response(d, "a", None).unwrap_err()), wire::disp_json(d, "a"));

    // sidecar not JSON
    std::fs::write(wire::disp_json(d, "a"), b"{not json").unwrap();
    assert_eq!(protocol_file(check_response(d, "a", None).unwrap_err()), wire::disp_json(d, "a"));

    // scale out of range
    std::fs::write(wire::disp_json(d, "a"), br#"{"d_max":1.5,"width":24,"height":12}"#).unwrap();
    assert_eq!(protocol_file(check_response(d, "a", None).unwrap_err()), wire::disp_json(d, "a"));

    // sidecar disagrees with the image
    std::fs::write(wire::disp_json(d, "a"), br#"{"d_max":0.03,"width":20,"height":12}"#).unwrap();
    assert_eq!(protocol_file(check_response(d, "a", None).unwrap_err()), wire::disp_png(d, "a"));

    // wrong size for the request
    copy_golden(d, "b");
    assert_eq!(protocol_file(check_response(d, "b", Some((25, 12))).unwrap_err()), wire::disp_png(d, "b"));

    // image missing or not a PNG
    std::fs::copy(fixtures().join("golden.disp.json"), wire::disp_json(d, "c")).unwrap();
    assert_eq!(protocol_file(check_response(d, "c", None).unwrap_err()), wire::disp_png(d, "c"));
    std::fs::write(wire::disp_png(d, "c"), b"\x89PNG garbage").unwrap();
    assert_eq!(protocol_file(check_response(d, "c", None).unwrap_err()), wire::disp_png(d, "c"));

    // 8-bit instead of 16-bit
    let gray8 = image::GrayImage::new(24, 12);
    gray8.save(wire::disp_png(d, "c")).unwrap();
    assert_eq!(protocol_file(check_response(d, "c", None).unwrap_err()), wire::disp_png(d, "c"));
}

#[test]
fn malformed_request_is_reported_by_the_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path(), StubMode::Echo);
    std::fs::write(dir.path().join(wire::REQUEST_JSON), b"[]").unwrap();
    std::fs::write(dir.path().join(wire::REQUEST_DONE), b"").unwrap();
    wait_for(&dir.path().join("request.error"));
    let text = std::fs::read_to_string(dir.path().join("request.error")).unwrap();
    assert!(text.contains(wire::REQUEST_JSON), "{text}");
    stop(dir.path(), server);
}

proptest! {
    #[test]
    fn encode_decode_within_one_level(
        w in 1usize..40,
        h in 1usize..40,
        scale in 1e-6f64..0.99,
        seed in any::<u64>(),
    ) {
        let mut s = seed | 1;
        let map = DisparityMap::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * scale
        })
        .unwrap();
        let (px, side) = encode_disparity(&map);
        let back = decode_disparity(&px, &side).unwrap();
        let bound = side.d_max / wire::LEVELS;
        for (a, b) in map.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= bound);
        }
    }
}
