//! A dependency-free adapter for exercising the exchange protocol: `echo`
//! returns the reference map attached to each request image, `constant:<v>`
//! answers every image with disparity `v`.

use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use crate::pngio;
use crate::raster::DisparityMap;

use super::wire::{self, RequestImage};
use super::ModelioError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StubMode {
    Echo,
    Constant(f64),
}

impl FromStr for StubMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "echo" {
            return Ok(StubMode::Echo);
        }
        let v = s
            .strip_prefix("constant:")
            .ok_or_else(|| format!("unknown stub mode {s:?}; use echo or constant:<value>"))?;
        let v: f64 = v.parse().map_err(|e| format!("bad constant {v:?}: {e}"))?;
        if !(0.0..1.0).contains(&v) {
            return Err(format!("constant disparity {v} outside [0, 1)"));
        }
        Ok(StubMode::Constant(v))
    }
}

fn answer(dir: &Path, entry: &RequestImage, mode: StubMode) -> Result<(), String> {
    let stem = entry.stem();
    match mode {
        StubMode::Echo => {
            let r = entry
                .reference
                .as_deref()
                .ok_or_else(|| format!("{}: echo needs a reference map", entry.image))?;
            for (src, dst) in [
                (wire::disp_png(dir, r), wire::disp_png(dir, stem)),
                (wire::disp_json(dir, r), wire::disp_json(dir, stem)),
            ] {
                std::fs::copy(&src, &dst).map_err(|e| format!("{}: {e}", src.display()))?;
            }
        }
        StubMode::Constant(v) => {
            let img = pngio::read_rgb(&dir.join(&entry.image)).map_err(|e| e.to_string())?;
            let map = DisparityMap::from_fn(img.width(), img.height(), |_, _| v).map_err(|e| e.to_string())?;
            wire::write_disparity(dir, stem, &map).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

/// Serve `dir` until a `shutdown` file appears. Per-image failures are
/// written as `<name>.error`; a malformed request as `request.error`.
pub fn serve(dir: &Path, mode: StubMode, poll: Duration) -> Result<(), ModelioError> {
    let done = dir.join(wire::REQUEST_DONE);
    loop {
        if dir.join(wire::SHUTDOWN).exists() {
            return Ok(());
        }
        if !done.exists() {
            std::thread::sleep(poll);
            continue;
        }
        let request = wire::read_request(dir);
        std::fs::remove_file(&done).map_err(|e| ModelioError::io(&done, e))?;
        let manifest = match request {
            Ok(m) => m,
            Err(e) => {
                let path = dir.join("request.error");
                std::fs::write(&path, e.to_string()).map_err(|e| ModelioError::io(&path, e))?;
                continue;
            }
        };
        for entry in &manifest.images {
            let stem = entry.stem();
            let (path, body) = match answer(dir, entry, mode) {
                Ok(()) => (wire::done_file(dir, stem), String::new()),
                Err(msg) => (wire::error_file(dir, stem), msg),
            };
            std::fs::write(&path, body).map_err(|e| ModelioError::io(&path, e))?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::wire::{check_response, write_request, RequestManifest};
    use crate::raster::{ImageBuffer, Rgb};

    #[test]
    fn mode_parsing() {
        assert_eq!("echo".parse::<StubMode>(), Ok(StubMode::Echo));
        assert_eq!("constant:0.02".parse::<StubMode>(), Ok(StubMode::Constant(0.02)));
        assert!("constant:2".parse::<StubMode>().is_err());
        assert!("mirror".parse::<StubMode>().is_err());
    }

    #[test]
    fn constant_stub_answers_value() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::new(7, 5, Rgb::WHITE).unwrap();
        let m = RequestManifest {
            batch_id: "x".into(),
            images: vec![RequestImage { image: "x_0.png".into(), reference: None }],
        };
        write_request(dir.path(), &m, &[&img]).unwrap();
        std::fs::write(dir.path().join(wire::SHUTDOWN), b"").unwrap();
        // shutdown wins over a pending request
        serve(dir.path(), StubMode::Constant(0.02), Duration::from_millis(1)).unwrap();
        assert!(!wire::done_file(dir.path(), "x_0").exists());

        std::fs::remove_file(dir.path().join(wire::SHUTDOWN)).unwrap();
        let p = dir.path().to_path_buf();
        let h = std::thread::spawn(move || serve(&p, StubMode::Constant(0.02), Duration::from_millis(1)));
        while !wire::done_file(dir.path(), "x_0").exists() {
            std::thread::sleep(Duration::from_millis(1));
        }
        std::fs::write(dir.path().join(wire::SHUTDOWN), b"").unwrap();
        h.join().unwrap().unwrap();
        let map = check_response(dir.path(), "x_0", Some((7, 5))).unwrap();
        assert!(map.values().iter().all(|&d| (d - 0.02).abs() <= 0.02 / wire::LEVELS));
    }

    #[test]
    fn malformed_request_keeps_adapter_alive() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(wire::REQUEST_JSON), b"{not json").unwrap();
        std::fs::write(dir.path().join(wire::REQUEST_DONE), b"").unwrap();
        let p = dir.path().to_path_buf();
        let h = std::thread::spawn(move || serve(&p, StubMode::Echo, Duration::from_millis(1)));
        while !dir.path().join("request.error").exists() {
            std::thread::sleep(Duration::from_millis(1));
        }
        assert!(!h.is_finished());
        std::fs::write(dir.path().join(wire::SHUTDOWN), b"").unwrap();
        h.join().unwrap().unwrap();
    }
}
