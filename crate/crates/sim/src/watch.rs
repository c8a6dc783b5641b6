//! Watch export emitter: writes the XML into an inbox directory or POSTs it
//! to the ingest route.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use ecg_core::{timefmt, DeviceKind, RecordingId};
use serde::Deserialize;
use thiserror::Error;

use crate::synth::SynthSpec;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("spec invalid: {0}")]
    Spec(String),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("upload failed: {0}")]
    Http(String),
    #[error("upload rejected with {status}: {body}")]
    Rejected { status: u16, body: String },
}

/// Accepted ingest response, as far as the emitter cares.
#[derive(Debug, Clone, Deserialize)]
pub struct Uploaded {
    pub recording_id: String,
    pub study_id: String,
    pub duplicate: bool,
}

pub fn emit_watch_export(spec: &SynthSpec, recorded_at: DateTime<Utc>) -> Result<Vec<u8>, EmitError> {
    let rate = spec.rate_for(DeviceKind::AppleWatch);
    if rate != 500 {
        return Err(EmitError::Spec(format!("watch exports are 500 Hz, spec says {rate}")));
    }
    if (spec.duration_s - ecg_core::ACQUISITION_S).abs() > 1e-9 {
        return Err(EmitError::Spec(format!("watch exports are 30 s, spec says {}", spec.duration_s)));
    }
    Ok(spec.payload(DeviceKind::AppleWatch, recorded_at))
}

/// Writes `<recording id>.ecg.xml` into `dir`.
pub fn write_to_inbox(dir: &Path, bytes: &[u8]) -> Result<PathBuf, EmitError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.ecg.xml", RecordingId::of_bytes(bytes)));
    std::fs::write(&path, bytes)?;
    Ok(path)
}

pub fn post_recording(
    client: &reqwest::blocking::Client,
    base_url: &str,
    device: DeviceKind,
    external_id: &str,
    fetched_at: Option<DateTime<Utc>>,
    bytes: Vec<u8>,
) -> Result<Uploaded, EmitError> {
    let mut req = client
        .post(format!("{}/v1/recordings", base_url.trim_end_matches('/')))
        .header("X-Device-Kind", device.as_str())
        .header("X-External-Id", external_id)
        .body(bytes);
    if let Some(t) = fetched_at {
        req = req.header("X-Fetched-At", timefmt::format(&t));
    }
    let resp = req.send().map_err(|e| EmitError::Http(e.to_string()))?;
    let status = resp.status();
    let body = resp.text().map_err(|e| EmitError::Http(e.to_string()))?;
    if !status.is_success() {
        return Err(EmitError::Rejected { status: status.as_u16(), body });
    }
    serde_json::from_str(&body).map_err(|e| EmitError::Http(format!("bad response body: {e}")))
}
