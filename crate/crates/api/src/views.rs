//! Response bodies. Each type has a matching JSON schema in `schemas/`.
//! External patient identifiers never appear here.

use chrono::{DateTime, Utc};
use ecg_core::{timefmt, DeviceKind, PredictionResult, RecordingId, StageTimings, StudyId};
use ecg_lake::{LakeEntry, Outcome, ProcessingStatus};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestResponse {
    pub recording_id: RecordingId,
    pub study_id: StudyId,
    pub index_seq: u64,
    pub device: DeviceKind,
    #[serde(with = "timefmt")]
    pub received_at: DateTime<Utc>,
    pub duplicate: bool,
}

impl IngestResponse {
    pub fn new(entry: &LakeEntry, duplicate: bool) -> Self {
        IngestResponse {
            recording_id: entry.recording_id.clone(),
            study_id: entry.study_id.clone(),
            index_seq: entry.index_seq,
            device: entry.device,
            received_at: entry.received_at,
            duplicate,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordingSummary {
    pub recording_id: RecordingId,
    pub index_seq: u64,
    pub device: DeviceKind,
    pub study_id: StudyId,
    #[serde(with = "timefmt")]
    pub received_at: DateTime<Utc>,
    pub status: &'static str,
}

impl RecordingSummary {
    pub fn new(entry: &LakeEntry, status: &ProcessingStatus) -> Self {
        RecordingSummary {
            recording_id: entry.recording_id.clone(),
            index_seq: entry.index_seq,
            device: entry.device,
            study_id: entry.study_id.clone(),
            received_at: entry.received_at,
            status: status.as_str(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordingList {
    pub items: Vec<RecordingSummary>,
    /// Pass as `since` to get only newer entries.
    pub next_since: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordingDetail {
    #[serde(flatten)]
    pub summary: RecordingSummary,
    #[serde(with = "timefmt")]
    pub recorded_at: DateTime<Utc>,
    pub lead: String,
    pub sample_rate_hz: u32,
    pub n_samples: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Waveform {
    pub recording_id: RecordingId,
    pub device: DeviceKind,
    #[serde(with = "timefmt")]
    pub recorded_at: DateTime<Utc>,
    pub sample_rate_hz: u32,
    pub unit: &'static str,
    pub n_samples: usize,
    pub duration_s: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelResult {
    pub model_id: String,
    pub probability: f64,
    pub label: bool,
    pub threshold: f64,
    pub timings: StageTimings,
    #[serde(with = "timefmt")]
    pub produced_at: DateTime<Utc>,
}

impl From<PredictionResult> for ModelResult {
    fn from(p: PredictionResult) -> Self {
        ModelResult {
            model_id: p.model_id,
            probability: p.probability,
            label: p.label,
            threshold: p.threshold,
            timings: p.timings,
            produced_at: p.produced_at,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelFailure {
    pub model_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Results {
    pub recording_id: RecordingId,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub results: Vec<ModelResult>,
    pub failures: Vec<ModelFailure>,
    /// Stage breakdown shared by every model of the recording once done.
    pub timings: Option<StageTimings>,
}

impl Results {
    pub fn from_outcomes(recording_id: RecordingId, outcomes: &[Outcome]) -> Self {
        let status = ProcessingStatus::from_outcomes(outcomes);
        let (code, reason) = match &status {
            ProcessingStatus::Rejected { code, reason } => (Some(code.clone()), Some(reason.clone())),
            ProcessingStatus::Failed { reason } => (None, Some(reason.clone())),
            _ => (None, None),
        };
        let mut results = Vec::new();
        let mut failures = Vec::new();
        let mut timings = None;
        for o in outcomes {
            match o {
                Outcome::Prediction(p) => results.push(ModelResult::from(p.clone())),
                Outcome::ModelFailed { model_id, code, message, .. } => failures.push(ModelFailure {
                    model_id: model_id.clone(),
                    code: code.clone(),
                    message: message.clone(),
                }),
                Outcome::Completed { timings: t, .. } => timings = Some(*t),
                _ => {}
            }
        }
        results.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        failures.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        Results { recording_id, status: status.as_str(), code, reason, results, failures, timings }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineItem {
    pub recording_id: RecordingId,
    pub index_seq: u64,
    pub device: DeviceKind,
    #[serde(with = "timefmt")]
    pub recorded_at: DateTime<Utc>,
    #[serde(with = "timefmt")]
    pub received_at: DateTime<Utc>,
    pub status: &'static str,
    pub results: Vec<ModelResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timeline {
    pub study_id: StudyId,
    pub items: Vec<TimelineItem>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LakeHealth {
    pub reachable: bool,
    pub recordings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PollerHealth {
    pub ticks: u64,
    #[serde(with = "timefmt::option")]
    pub last_tick_at: Option<DateTime<Utc>>,
    pub last_tick_age_s: Option<f64>,
    pub poll_interval_s: f64,
    pub cursor: u64,
    pub processed: u64,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    /// "ok", or "degraded" when the lake is unreachable or the poller has
    /// missed more than two intervals.
    pub status: &'static str,
    #[serde(with = "timefmt")]
    pub now: DateTime<Utc>,
    pub lake: LakeHealth,
    pub poller: PollerHealth,
}
