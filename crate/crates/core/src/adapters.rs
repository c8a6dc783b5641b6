//! Device payload adapters.
//!
//! Two wire shapes are accepted:
//!
//! * watch exports: an XML document whose root element is `ecgExport`
//!   (attributes `rateHz`, `recordedAt`, `lead`; a `samples` child with
//!   whitespace-separated integer microvolts);
//! * vendor records (Kardia, Fitbit): one JSON object with the fields
//!   `device`, `rate`, `recordedAt` and `samples_uV`. The value of `device`
//!   is the per-vendor signature.
//!
//! Parsers convert microvolts to millivolts and enforce each device's rate
//! and duration contract. They never panic on arbitrary input.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceKind, EcgRecording, RecordingId, StudyId};
use crate::{timefmt, ACQUISITION_S};

pub const WATCH_ROOT: &str = "ecgExport";
pub const WATCH_RATE_HZ: u32 = 500;
pub const KARDIA_RATE_HZ: u32 = 100;
const RECORD_FIELDS: [&str; 4] = ["device", "rate", "recordedAt", "samples_uV"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("payload does not match any known device format")]
    FormatUnknown,
    #[error("malformed {device} payload: {message}")]
    Parse { device: DeviceKind, message: String },
    #[error("{device} payload declares {declared} Hz; accepted: {accepted:?}")]
    RateMismatch { device: DeviceKind, declared: u32, accepted: Vec<u32> },
    #[error("{device} recording lasts {duration_s:.3} s; expected {expected_s} ± {tolerance_s} s")]
    DurationOutOfRange { device: DeviceKind, duration_s: f64, expected_s: f64, tolerance_s: f64 },
    #[error("payload is {detected} but was declared as {declared}")]
    DeviceMismatch { declared: DeviceKind, detected: DeviceKind },
}

impl AdapterError {
    /// Stable machine-readable code for API responses.
    pub fn code(&self) -> &'static str {
        match self {
            AdapterError::FormatUnknown => "FormatUnknown",
            AdapterError::Parse { .. } => "ParseError",
            AdapterError::RateMismatch { .. } => "RateMismatch",
            AdapterError::DurationOutOfRange { .. } => "DurationOutOfRange",
            AdapterError::DeviceMismatch { .. } => "DeviceMismatch",
        }
    }

    fn parse(device: DeviceKind, message: impl Into<String>) -> Self {
        AdapterError::Parse { device, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    /// Sample rates accepted from Fitbit records.
    pub fitbit_rates: Vec<u32>,
    pub duration_s: f64,
    pub duration_tolerance_s: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig { fitbit_rates: vec![250], duration_s: ACQUISITION_S, duration_tolerance_s: 0.5 }
    }
}

/// A parsed payload that has not been attached to a study yet.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceReading {
    pub recording_id: RecordingId,
    pub device: DeviceKind,
    pub sample_rate_hz: u32,
    pub lead: String,
    /// Millivolts.
    pub samples: Vec<f64>,
    pub recorded_at: DateTime<Utc>,
}

impl DeviceReading {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_recording(self, study_id: StudyId, received_at: DateTime<Utc>) -> EcgRecording {
        EcgRecording {
            recording_id: self.recording_id,
            device: self.device,
            study_id,
            sample_rate_hz: self.sample_rate_hz,
            lead: self.lead,
            samples: self.samples,
            recorded_at: self.recorded_at,
            received_at: timefmt::truncate_ms(received_at),
        }
    }
}

fn uv_to_mv(uv: i64) -> f64 {
    uv as f64 / 1000.0
}

/// Classifies a payload by structural signature. Total over arbitrary bytes.
pub fn detect_format(bytes: &[u8]) -> Result<DeviceKind, AdapterError> {
    if bytes.is_empty() {
        return Err(AdapterError::FormatUnknown);
    }
    if has_watch_root(bytes) {
        return Ok(DeviceKind::AppleWatch);
    }
    let Ok(serde_json::Value::Object(map)) = serde_json::from_slice::<serde_json::Value>(bytes) else {
        return Err(AdapterError::FormatUnknown);
    };
    if !RECORD_FIELDS.iter().all(|k| map.contains_key(*k)) {
        return Err(AdapterError::FormatUnknown);
    }
    match map.get("device").and_then(|v| v.as_str()) {
        Some("kardia") => Ok(DeviceKind::Kardia),
        Some("fitbit") => Ok(DeviceKind::Fitbit),
        _ => Err(AdapterError::FormatUnknown),
    }
}

/// True when the first element of the document is `<ecgExport`.
fn has_watch_root(bytes: &[u8]) -> bool {
    let mut rest = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    loop {
        let skip = rest.iter().take_while(|b| b.is_ascii_whitespace()).count();
        rest = &rest[skip..];
        let closer: &[u8] = if rest.starts_with(b"<?") {
            b"?>"
        } else if rest.starts_with(b"<!--") {
            b"-->"
        } else if rest.starts_with(b"<!") {
            b">"
        } else {
            break;
        };
        match find(rest, closer) {
            Some(pos) => rest = &rest[pos + closer.len()..],
            None => return false,
        }
    }
    let Some(after) = rest.strip_prefix(b"<").and_then(|r| r.strip_prefix(WATCH_ROOT.as_bytes())) else {
        return false;
    };
    matches!(after.first(), Some(b) if b.is_ascii_whitespace() || *b == b'>' || *b == b'/')
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Detects the format and dispatches to the matching parser.
pub fn parse_payload(bytes: &[u8], config: &AdapterConfig) -> Result<DeviceReading, AdapterError> {
    match detect_format(bytes)? {
        DeviceKind::AppleWatch => parse_apple_watch_export(bytes, config),
        DeviceKind::Kardia => parse_kardia_record(bytes, config),
        DeviceKind::Fitbit => parse_fitbit_record(bytes, config),
    }
}

fn check_duration(device: DeviceKind, n: usize, rate: u32, config: &AdapterConfig) -> Result<(), AdapterError> {
    if n == 0 {
        return Err(AdapterError::parse(device, "no samples"));
    }
    let duration_s = n as f64 / rate as f64;
    if (duration_s - config.duration_s).abs() > config.duration_tolerance_s {
        return Err(AdapterError::DurationOutOfRange {
            device,
            duration_s,
            expected_s: config.duration_s,
            tolerance_s: config.duration_tolerance_s,
        });
    }
    Ok(())
}

pub fn parse_apple_watch_export(bytes: &[u8], config: &AdapterConfig) -> Result<DeviceReading, AdapterError> {
    let device = DeviceKind::AppleWatch;
    let text = std::str::from_utf8(bytes).map_err(|e| AdapterError::parse(device, format!("not UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| AdapterError::parse(device, e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != WATCH_ROOT {
        return Err(AdapterError::FormatUnknown);
    }

    let rate: u32 = root
        .attribute("rateHz")
        .ok_or_else(|| AdapterError::parse(device, "missing rateHz"))?
        .trim()
        .parse()
        .map_err(|_| AdapterError::parse(device, "rateHz is not a positive integer"))?;
    if rate != WATCH_RATE_HZ {
        return Err(AdapterError::RateMismatch { device, declared: rate, accepted: vec![WATCH_RATE_HZ] });
    }
    let recorded_at = root
        .attribute("recordedAt")
        .ok_or_else(|| AdapterError::parse(device, "missing recordedAt"))
        .and_then(|s| timefmt::parse(s.trim()).map_err(|e| AdapterError::parse(device, format!("recordedAt: {e}"))))?;
    let lead = root.attribute("lead").unwrap_or("I").trim();
    if lead != "I" {
        return Err(AdapterError::parse(device, format!("unsupported lead {lead:?}")));
    }

    let samples_node = root
        .children()
        .find(|n| n.is_element() && n.tag_name().name() == "samples")
        .ok_or_else(|| AdapterError::parse(device, "missing samples element"))?;
    let mut samples = Vec::new();
    for node in samples_node.children().filter(|n| n.is_text()) {
        for tok in node.text().unwrap_or_default().split_ascii_whitespace() {
            let uv: i64 = tok
                .parse()
                .map_err(|_| AdapterError::parse(device, format!("sample {tok:?} is not an integer")))?;
            samples.push(uv_to_mv(uv));
        }
    }
    check_duration(device, samples.len(), rate, config)?;

    Ok(DeviceReading {
        recording_id: RecordingId::of_bytes(bytes),
        device,
        sample_rate_hz: rate,
        lead: "I".into(),
        samples,
        recorded_at,
    })
}

#[derive(Deserialize)]
struct RecordWire {
    device: String,
    rate: u32,
    #[serde(rename = "recordedAt")]
    recorded_at: String,
    #[serde(rename = "samples_uV")]
    samples_uv: Vec<i64>,
}

fn parse_record(
    bytes: &[u8],
    device: DeviceKind,
    accepted: &[u32],
    config: &AdapterConfig,
) -> Result<DeviceReading, AdapterError> {
    let wire: RecordWire = serde_json::from_slice(bytes).map_err(|e| AdapterError::parse(device, e.to_string()))?;
    if wire.device != device.as_str() {
        return Err(AdapterError::DeviceMismatch {
            declared: device,
            detected: wire.device.parse().map_err(|_| AdapterError::FormatUnknown)?,
        });
    }
    if wire.rate == 0 || !accepted.contains(&wire.rate) {
        return Err(AdapterError::RateMismatch { device, declared: wire.rate, accepted: accepted.to_vec() });
    }
    let recorded_at = timefmt::parse(&wire.recorded_at)
        .map_err(|e| AdapterError::parse(device, format!("recordedAt: {e}")))?;
    check_duration(device, wire.samples_uv.len(), wire.rate, config)?;
    Ok(DeviceReading {
        recording_id: RecordingId::of_bytes(bytes),
        device,
        sample_rate_hz: wire.rate,
        lead: "I".into(),
        samples: wire.samples_uv.into_iter().map(uv_to_mv).collect(),
        recorded_at,
    })
}

pub fn parse_kardia_record(bytes: &[u8], config: &AdapterConfig) -> Result<DeviceReading, AdapterError> {
    parse_record(bytes, DeviceKind::Kardia, &[KARDIA_RATE_HZ], config)
}

pub fn parse_fitbit_record(bytes: &[u8], config: &AdapterConfig) -> Result<DeviceReading, AdapterError> {
    parse_record(bytes, DeviceKind::Fitbit, &config.fitbit_rates, config)
}

/// Serializes a watch export. Samples are integer microvolts.
pub fn write_watch_export(rate_hz: u32, recorded_at: DateTime<Utc>, samples_uv: &[i64]) -> Vec<u8> {
    let mut out = String::with_capacity(samples_uv.len() * 6 + 160);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<{WATCH_ROOT} rateHz=\"{rate_hz}\" recordedAt=\"{}\" lead=\"I\">\n  <samples>",
        timefmt::format(&recorded_at)
    ));
    for (i, v) in samples_uv.iter().enumerate() {
        if i % 20 == 0 {
            out.push_str("\n    ");
        } else {
            out.push(' ');
        }
        out.push_str(&v.to_string());
    }
    out.push_str("\n  </samples>\n</");
    out.push_str(WATCH_ROOT);
    out.push_str(">\n");
    out.into_bytes()
}

#[derive(Serialize)]
struct RecordOut<'a> {
    device: &'a str,
    rate: u32,
    #[serde(rename = "recordedAt")]
    recorded_at: String,
    #[serde(rename = "samples_uV")]
    samples_uv: &'a [i64],
}

/// Serializes a vendor record as compact JSON with a fixed field order.
pub fn write_vendor_record(device: DeviceKind, rate_hz: u32, recorded_at: DateTime<Utc>, samples_uv: &[i64]) -> Vec<u8> {
    serde_json::to_vec(&RecordOut {
        device: device.as_str(),
        rate: rate_hz,
        recorded_at: timefmt::format(&recorded_at),
        samples_uv,
    })
    .expect("record serialization is infallible")
}
