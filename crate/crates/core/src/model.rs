//! Shared domain types and the scalar primitives used across the platform.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::{timefmt, ACQUISITION_S, WINDOW_LEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown device kind {0:?}")]
    UnknownDevice(String),
    #[error("invalid identifier {0:?}")]
    BadId(String),
    #[error("domain error: {0} is not finite")]
    NonFinite(f64),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// The three supported wearable / portable ECG sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    AppleWatch,
    Kardia,
    Fitbit,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 3] = [DeviceKind::AppleWatch, DeviceKind::Kardia, DeviceKind::Fitbit];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::AppleWatch => "apple_watch",
            DeviceKind::Kardia => "kardia",
            DeviceKind::Fitbit => "fitbit",
        }
    }

    /// Human label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DeviceKind::AppleWatch => "Apple Watch",
            DeviceKind::Kardia => "Kardia",
            DeviceKind::Fitbit => "Fitbit",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apple_watch" | "applewatch" | "apple-watch" | "watch" => Ok(DeviceKind::AppleWatch),
            "kardia" | "kardiamobile" => Ok(DeviceKind::Kardia),
            "fitbit" => Ok(DeviceKind::Fitbit),
            _ => Err(DomainError::UnknownDevice(s.to_string())),
        }
    }
}

fn is_lower_hex(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// SHA-256 of the raw source payload, lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RecordingId(String);

impl RecordingId {
    pub const HEX_LEN: usize = 64;

    pub fn of_bytes(bytes: &[u8]) -> Self {
        RecordingId(content_hash(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Two-character shard prefix used for blob fan-out.
    pub fn shard(&self) -> &str {
        &self.0[..2]
    }
}

impl TryFrom<String> for RecordingId {
    type Error = DomainError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if is_lower_hex(&s, Self::HEX_LEN) {
            Ok(RecordingId(s))
        } else {
            Err(DomainError::BadId(s))
        }
    }
}

impl FromStr for RecordingId {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordingId::try_from(s.to_string())
    }
}

impl From<RecordingId> for String {
    fn from(id: RecordingId) -> String {
        id.0
    }
}

impl fmt::Display for RecordingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Pseudonymous study identifier standing in for an external patient id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StudyId(String);

impl StudyId {
    pub const HEX_LEN: usize = 24;

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for StudyId {
    type Error = DomainError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if is_lower_hex(&s, Self::HEX_LEN) {
            Ok(StudyId(s))
        } else {
            Err(DomainError::BadId(s))
        }
    }
}

impl FromStr for StudyId {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyId::try_from(s.to_string())
    }
}

impl From<StudyId> for String {
    fn from(id: StudyId) -> String {
        id.0
    }
}

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A device payload as it arrived, before parsing.
#[derive(Debug, Clone)]
pub struct RawDeviceRecord {
    pub device: DeviceKind,
    pub bytes: Vec<u8>,
    /// Inbox path, upload route or vendor URL the payload came from.
    pub source_uri: String,
    /// When the platform started fetching / receiving the payload.
    pub fetched_at: DateTime<Utc>,
    /// When the recording became available to the platform. Vendor feeds
    /// set this to the vendor-side availability time; uploads leave it
    /// unset and the lake uses the durable receive time.
    pub available_at: Option<DateTime<Utc>>,
}

/// Canonical single-lead recording. Samples are millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecording {
    pub recording_id: RecordingId,
    pub device: DeviceKind,
    pub study_id: StudyId,
    pub sample_rate_hz: u32,
    pub lead: String,
    pub samples: Vec<f64>,
    #[serde(with = "timefmt")]
    pub recorded_at: DateTime<Utc>,
    #[serde(with = "timefmt")]
    pub received_at: DateTime<Utc>,
}

impl EcgRecording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Structural invariants every stored recording satisfies.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.samples.is_empty() {
            return Err(DomainError::Invariant("recording has no samples".into()));
        }
        if self.sample_rate_hz == 0 {
            return Err(DomainError::Invariant("sample rate must be positive".into()));
        }
        if self.lead != "I" {
            return Err(DomainError::Invariant(format!("unsupported lead {:?}", self.lead)));
        }
        if let Some(x) = self.samples.iter().find(|x| !x.is_finite()) {
            return Err(DomainError::NonFinite(*x));
        }
        let fixed_rate = match self.device {
            DeviceKind::AppleWatch => Some(500),
            DeviceKind::Kardia => Some(100),
            DeviceKind::Fitbit => None,
        };
        if let Some(rate) = fixed_rate {
            if self.sample_rate_hz != rate {
                return Err(DomainError::Invariant(format!(
                    "{} recordings are {} Hz, got {}",
                    self.device, rate, self.sample_rate_hz
                )));
            }
        }
        Ok(())
    }
}

/// Model-ready window: exactly [`WINDOW_LEN`] z-scored values.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow<T> {
    values: Vec<T>,
    pub source_recording_id: RecordingId,
    pub window_start_s: f64,
}

impl<T: Scalar> NormalizedWindow<T> {
    pub fn new(values: Vec<T>, source_recording_id: RecordingId, window_start_s: f64) -> Result<Self, DomainError> {
        if values.len() != WINDOW_LEN {
            return Err(DomainError::Invariant(format!(
                "window must have {WINDOW_LEN} values, got {}",
                values.len()
            )));
        }
        Ok(NormalizedWindow { values, source_recording_id, window_start_s })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Five-stage turnaround decomposition of one processed recording.
///
/// `total_s` is stored alongside the parts and re-checked whenever a value
/// is deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTimings {
    pub acquisition_s: f64,
    pub upload_s: f64,
    pub pickup_s: f64,
    pub inference_s: f64,
    pub publish_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub const TOTAL_TOLERANCE: f64 = 1e-9;

    /// Timings for a standard-length acquisition.
    pub fn new(upload_s: f64, pickup_s: f64, inference_s: f64, publish_s: f64) -> Result<Self, DomainError> {
        Self::from_parts(ACQUISITION_S, upload_s, pickup_s, inference_s, publish_s)
    }

    pub fn from_parts(
        acquisition_s: f64,
        upload_s: f64,
        pickup_s: f64,
        inference_s: f64,
        publish_s: f64,
    ) -> Result<Self, DomainError> {
        for v in [acquisition_s, upload_s, pickup_s, inference_s, publish_s] {
            if !v.is_finite() {
                return Err(DomainError::NonFinite(v));
            }
            if v < 0.0 {
                return Err(DomainError::Invariant(format!("negative stage duration {v}")));
            }
        }
        Ok(StageTimings {
            acquisition_s,
            upload_s,
            pickup_s,
            inference_s,
            publish_s,
            total_s: Self::sum(acquisition_s, upload_s, pickup_s, inference_s, publish_s),
        })
    }

    fn sum(a: f64, u: f64, p: f64, i: f64, b: f64) -> f64 {
        a + u + p + i + b
    }

    pub fn parts_sum(&self) -> f64 {
        Self::sum(self.acquisition_s, self.upload_s, self.pickup_s, self.inference_s, self.publish_s)
    }

    /// Turnaround after acquisition ends.
    pub fn post_acquisition_s(&self) -> f64 {
        self.upload_s + self.pickup_s + self.inference_s + self.publish_s
    }
}

#[derive(Deserialize)]
struct StageTimingsRepr {
    acquisition_s: f64,
    upload_s: f64,
    pickup_s: f64,
    inference_s: f64,
    publish_s: f64,
    total_s: f64,
}

impl<'de> Deserialize<'de> for StageTimings {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = StageTimingsRepr::deserialize(d)?;
        let t = StageTimings::from_parts(r.acquisition_s, r.upload_s, r.pickup_s, r.inference_s, r.publish_s)
            .map_err(serde::de::Error::custom)?;
        if (t.total_s - r.total_s).abs() > Self::TOTAL_TOLERANCE {
            return Err(serde::de::Error::custom(format!(
                "total_s {} does not match the stage sum {}",
                r.total_s, t.total_s
            )));
        }
        Ok(StageTimings { total_s: r.total_s, ..t })
    }
}

/// One model's verdict for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub recording_id: RecordingId,
    pub model_id: String,
    pub probability: f64,
    pub label: bool,
    pub threshold: f64,
    pub timings: StageTimings,
    #[serde(with = "timefmt")]
    pub produced_at: DateTime<Utc>,
}

impl PredictionResult {
    pub fn new(
        recording_id: RecordingId,
        model_id: impl Into<String>,
        probability: f64,
        threshold: f64,
        timings: StageTimings,
        produced_at: DateTime<Utc>,
    ) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(DomainError::Invariant(format!("probability {probability} outside [0,1]")));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(DomainError::Invariant(format!("threshold {threshold} outside (0,1)")));
        }
        Ok(PredictionResult {
            recording_id,
            model_id: model_id.into(),
            probability,
            label: probability >= threshold,
            threshold,
            timings,
            produced_at: timefmt::truncate_ms(produced_at),
        })
    }
}

/// Logistic function `1 / (1 + e^-x)`.
pub fn sigmoid<T: Scalar>(x: T) -> Result<T, DomainError> {
    if !x.is_finite() {
        return Err(DomainError::NonFinite(x.as_f64()));
    }
    Ok(sigmoid_unchecked(x))
}

/// Sigmoid without the finiteness check; evaluated on the side that cannot
/// overflow so both tails stay accurate.
pub(crate) fn sigmoid_unchecked<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// SHA-256 digest of `bytes` as 64 lowercase hex characters.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
