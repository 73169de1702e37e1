//! The boundary to depth estimators: a file-exchange wire protocol, a client
//! for external adapters and two analytic oracle models.
//!
//! An exchange directory holds one batch at a time:
//!
//! * the harness writes `<name>.png` (8-bit RGB) for every image, then
//!   `request.json` and finally the empty sentinel `request.done`;
//! * the adapter removes `request.done`, then answers each image with
//!   `<name>.disp.png` (16-bit gray), `<name>.disp.json`
//!   `{"d_max", "width", "height"}` and the sentinel `<name>.done`, or with
//!   `<name>.error` holding a diagnostic (an unreadable manifest gets
//!   `request.error`);
//! * the harness decodes `pixel / 65535 * d_max` and clears the batch;
//! * an empty `shutdown` file asks the adapter to exit.

mod client;
mod oracle;
pub mod stub;
pub mod wire;

use std::path::PathBuf;

use thiserror::Error;

use crate::raster::RasterError;

pub use client::{EndpointKind, ModelClient, ModelEndpoint, SceneHint, EXCHANGE_DIR_ENV};
pub use oracle::{render_oracle, Footprint, Obstacle, OracleMode, OracleSpec};
pub use wire::{check_response, decode_disparity, encode_disparity, DispSidecar, RequestImage, RequestManifest};

#[derive(Debug, Error)]
pub enum ModelioError {
    #[error("endpoint timed out after {secs} s waiting for {waiting_for}")]
    Timeout { secs: f64, waiting_for: String },
    #[error("protocol error in {}: {reason}", file.display())]
    Protocol { file: PathBuf, reason: String },
    #[error("model error: {message}\n{diagnostics}")]
    Model { message: String, diagnostics: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl ModelioError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModelioError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn protocol(file: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        ModelioError::Protocol {
            file: file.into(),
            reason: reason.into(),
        }
    }
}
