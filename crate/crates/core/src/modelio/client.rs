use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::raster::{DisparityMap, ImageBuffer};

use super::oracle::{render_oracle, OracleMode, OracleSpec};
use super::wire::{self, RequestImage, RequestManifest};
use super::ModelioError;

/// Root under which per-run exchange directories are created.
pub const EXCHANGE_DIR_ENV: &str = "DEPTHCUE_EXCHANGE_DIR";

const ADAPTER_LOG: &str = "adapter.log";
const POLL: Duration = Duration::from_millis(2);
const LOG_TAIL_BYTES: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointKind {
    /// An adapter launched once per client; the exchange directory is
    /// appended to `command` as its last argument.
    Subprocess { command: Vec<String> },
    /// An adapter already serving `path`.
    Directory { path: PathBuf },
    /// In-process oracle. `mode` and `noise_sd`, when set, override the
    /// scene hints.
    BuiltinOracle {
        mode: OracleMode,
        #[serde(default)]
        noise_sd: Option<f64>,
    },
}

fn default_timeout() -> f64 {
    120.0
}

fn default_max_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    #[serde(flatten)]
    pub kind: EndpointKind,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
}

impl ModelEndpoint {
    pub fn new(kind: EndpointKind) -> Self {
        Self {
            kind,
            timeout_s: default_timeout(),
            max_batch: default_max_batch(),
        }
    }

    pub fn oracle(mode: OracleMode) -> Self {
        Self::new(EndpointKind::BuiltinOracle { mode, noise_sd: None })
    }

    /// `oracle:geometry-aware`, `oracle:fixed-prior`, `dir:<path>`, or a
    /// whitespace-separated adapter command line.
    pub fn parse(s: &str) -> Result<Self, ModelioError> {
        let s = s.trim();
        let kind = match s {
            "oracle:geometry-aware" => EndpointKind::BuiltinOracle {
                mode: OracleMode::GeometryAware,
                noise_sd: None,
            },
            "oracle:fixed-prior" => EndpointKind::BuiltinOracle {
                mode: OracleMode::FixedPrior,
                noise_sd: None,
            },
            _ => {
                if let Some(p) = s.strip_prefix("dir:") {
                    EndpointKind::Directory { path: PathBuf::from(p) }
                } else if s.starts_with("oracle:") {
                    return Err(ModelioError::Config(format!("unknown oracle {s:?}")));
                } else {
                    EndpointKind::Subprocess {
                        command: s.split_whitespace().map(String::from).collect(),
                    }
                }
            }
        };
        let ep = Self::new(kind);
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<(), ModelioError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ModelioError::Config(format!("timeout_s must be positive, got {}", self.timeout_s)));
        }
        if self.max_batch == 0 {
            return Err(ModelioError::Config("max_batch must be at least 1".into()));
        }
        match &self.kind {
            EndpointKind::Subprocess { command } if command.is_empty() || command[0].is_empty() => {
                Err(ModelioError::Config("subprocess command is empty".into()))
            }
            EndpointKind::BuiltinOracle { noise_sd: Some(sd), .. } if !(*sd >= 0.0) => {
                Err(ModelioError::Config(format!("noise_sd must be >= 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self.kind, EndpointKind::BuiltinOracle { .. })
    }
}

/// The scene an oracle should assume for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneHint {
    pub spec: OracleSpec,
    pub seed: u64,
}

enum Exchange {
    Temp(TempDir),
    Fixed(PathBuf),
}

impl Exchange {
    fn path(&self) -> &Path {
        match self {
            Exchange::Temp(t) => t.path(),
            Exchange::Fixed(p) => p,
        }
    }
}

#[derive(Default)]
struct Session {
    exchange: Option<Exchange>,
    child: Option<Child>,
    next_batch: u64,
}

/// A connection to one endpoint. External endpoints serve one batch at a
/// time; concurrent callers queue on an internal lock.
pub struct ModelClient {
    endpoint: ModelEndpoint,
    session: Mutex<Session>,
}

impl ModelClient {
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, ModelioError> {
        endpoint.validate()?;
        Ok(Self {
            endpoint,
            session: Mutex::new(Session::default()),
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    /// One disparity map per image, in input order. A failing item fails
    /// the whole batch.
    pub fn request_disparity(
        &self,
        images: &[&ImageBuffer],
        hints: Option<&[SceneHint]>,
    ) -> Result<Vec<DisparityMap>, ModelioError> {
        if images.len() > self.endpoint.max_batch {
            return Err(ModelioError::Config(format!(
                "batch of {} exceeds max_batch {}",
                images.len(),
                self.endpoint.max_batch
            )));
        }
        if let Some(h) = hints {
            if h.len() != images.len() {
                return Err(ModelioError::Config(format!(
                    "{} scene hints for {} images",
                    h.len(),
                    images.len()
                )));
            }
        }
        if images.is_empty() {
            return Ok(Vec::new());
        }
        match &self.endpoint.kind {
            EndpointKind::BuiltinOracle { mode, noise_sd } => {
                let hints = hints.ok_or_else(|| ModelioError::Config("builtin oracle needs scene hints".into()))?;
                images
                    .iter()
                    .zip(hints)
                    .map(|(img, hint)| {
                        let mut spec = hint.spec.clone();
                        spec.mode = *mode;
                        if let Some(sd) = noise_sd {
                            spec.noise_sd = *sd;
                        }
                        render_oracle(&spec, img.width(), img.height(), hint.seed)
                    })
                    .collect()
            }
            _ => {
                let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
                self.ensure_started(&mut session)?;
                let batch = session.next_batch;
                session.next_batch += 1;
                let dir = session.exchange.as_ref().expect("started").path().to_path_buf();
                let result = self.exchange_batch(&mut session, &dir, batch, images, hints);
                cleanup_batch(&dir, &batch_id(batch));
                result
            }
        }
    }

    fn ensure_started(&self, session: &mut Session) -> Result<(), ModelioError> {
        if session.exchange.is_some() {
            return Ok(());
        }
        match &self.endpoint.kind {
            EndpointKind::Directory { path } => {
                if !path.is_dir() {
                    return Err(ModelioError::Config(format!("exchange directory {} does not exist", path.display())));
                }
                session.exchange = Some(Exchange::Fixed(path.clone()));
            }
            EndpointKind::Subprocess { command } => {
                let tmp = match std::env::var_os(EXCHANGE_DIR_ENV) {
                    Some(root) => {
                        std::fs::create_dir_all(&root).map_err(|e| ModelioError::io(&root, e))?;
                        tempfile::Builder::new().prefix("exchange-").tempdir_in(&root)
                    }
                    None => tempfile::Builder::new().prefix("depthcue-exchange-").tempdir(),
                }
                .map_err(|e| ModelioError::io("exchange directory", e))?;
                let log_path = tmp.path().join(ADAPTER_LOG);
                let log = File::create(&log_path).map_err(|e| ModelioError::io(&log_path, e))?;
                let log2 = log.try_clone().map_err(|e| ModelioError::io(&log_path, e))?;
                let child = Command::new(&command[0])
                    .args(&command[1..])
                    .arg(tmp.path())
                    .stdin(Stdio::null())
                    .stdout(log)
                    .stderr(log2)
                    .spawn()
                    .map_err(|e| ModelioError::Model {
                        message: format!("failed to launch {:?}", command[0]),
                        diagnostics: e.to_string(),
                    })?;
                log::debug!("launched adapter pid {} in {}", child.id(), tmp.path().display());
                session.child = Some(child);
                session.exchange = Some(Exchange::Temp(tmp));
            }
            EndpointKind::BuiltinOracle { .. } => unreachable!("oracles need no session"),
        }
        Ok(())
    }

    fn exchange_batch(
        &self,
        session: &mut Session,
        dir: &Path,
        batch: u64,
        images: &[&ImageBuffer],
        hints: Option<&[SceneHint]>,
    ) -> Result<Vec<DisparityMap>, ModelioError> {
        let id = batch_id(batch);
        let mut entries = Vec::with_capacity(images.len());
        for (k, img) in images.iter().enumerate() {
            let stem = format!("{id}_{k:03}");
            let reference = match hints {
                Some(h) => {
                    let r = format!("{stem}.ref");
                    let map = render_oracle(&h[k].spec, img.width(), img.height(), h[k].seed)?;
                    wire::write_disparity(dir, &r, &map)?;
                    Some(r)
                }
                None => None,
            };
            entries.push(RequestImage {
                image: format!("{stem}.png"),
                reference,
            });
        }
        let manifest = RequestManifest {
            batch_id: id.clone(),
            images: entries,
        };
        wire::write_request(dir, &manifest, images)?;

        let deadline = Instant::now() + Duration::from_secs_f64(self.endpoint.timeout_s);
        let mut pending: Vec<&RequestImage> = manifest.images.iter().collect();
        loop {
            let request_err = dir.join("request.error");
            if request_err.exists() {
                let text = std::fs::read_to_string(&request_err).unwrap_or_default();
                let _ = std::fs::remove_file(&request_err);
                return Err(ModelioError::protocol(dir.join(wire::REQUEST_JSON), format!("adapter rejected request: {}", text.trim())));
            }
            let mut still = Vec::with_capacity(pending.len());
            for e in pending {
                let err = wire::error_file(dir, e.stem());
                if err.exists() {
                    let text = std::fs::read_to_string(&err).unwrap_or_default();
                    return Err(ModelioError::Model {
                        message: format!("adapter failed on {}", e.image),
                        diagnostics: text,
                    });
                }
                if !wire::done_file(dir, e.stem()).exists() {
                    still.push(e);
                }
            }
            pending = still;
            if pending.is_empty() {
                break;
            }
            if let Some(child) = session.child.as_mut() {
                if let Ok(Some(status)) = child.try_wait() {
                    session.child = None;
                    return Err(ModelioError::Model {
                        message: format!("adapter exited with {status}"),
                        diagnostics: log_tail(&dir.join(ADAPTER_LOG)),
                    });
                }
            }
            if Instant::now() >= deadline {
                return Err(ModelioError::Timeout {
                    secs: self.endpoint.timeout_s,
                    waiting_for: pending[0].stem().to_string(),
                });
            }
            std::thread::sleep(POLL);
        }
        manifest
            .images
            .iter()
            .zip(images)
            .map(|(e, img)| wire::check_response(dir, e.stem(), Some((img.width(), img.height()))))
            .collect()
    }

    /// Ask the adapter to exit and reap a launched process.
    pub fn shutdown(&self) {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(ex) = &session.exchange {
            let _ = std::fs::write(ex.path().join(wire::SHUTDOWN), b"");
        }
        if let Some(mut child) = session.child.take() {
            let deadline = Instant::now() + Duration::from_secs(5);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
        session.exchange = None;
    }
}

impl Drop for ModelClient {
    fn drop(&mut self) {
        if matches!(self.endpoint.kind, EndpointKind::Subprocess { .. }) {
            self.shutdown();
        }
    }
}

fn batch_id(n: u64) -> String {
    format!("b{n:06}")
}

fn cleanup_batch(dir: &Path, id: &str) {
    let _ = std::fs::remove_file(dir.join(wire::REQUEST_JSON));
    let _ = std::fs::remove_file(dir.join(wire::REQUEST_DONE));
    if let Ok(rd) = std::fs::read_dir(dir) {
        for e in rd.flatten() {
            if e.file_name().to_string_lossy().starts_with(id) {
                let _ = std::fs::remove_file(e.path());
            }
        }
    }
}

fn log_tail(path: &Path) -> String {
    use std::io::{Read, Seek, SeekFrom};
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let _ = f.seek(SeekFrom::Start(len.saturating_sub(LOG_TAIL_BYTES)));
    let mut s = String::new();
    let _ = f.read_to_string(&mut s);
    s
}
