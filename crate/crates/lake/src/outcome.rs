//! Per-recording processing outcomes, stored as an append-only log.

use chrono::{DateTime, Utc};
use ecg_core::timefmt;
use ecg_core::{PredictionResult, RecordingId, StageTimings};
use serde::{Deserialize, Serialize};

/// One row of `outcomes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Prediction(PredictionResult),
    /// A single model could not score the recording.
    ModelFailed {
        recording_id: RecordingId,
        model_id: String,
        code: String,
        message: String,
        #[serde(with = "timefmt")]
        produced_at: DateTime<Utc>,
    },
    /// Preprocessing refused the recording; no model ran.
    Rejected {
        recording_id: RecordingId,
        code: String,
        reason: String,
        #[serde(with = "timefmt")]
        produced_at: DateTime<Utc>,
    },
    /// The worker failed unexpectedly.
    Failed {
        recording_id: RecordingId,
        reason: String,
        #[serde(with = "timefmt")]
        produced_at: DateTime<Utc>,
    },
    /// Every model has reported; written last.
    Completed {
        recording_id: RecordingId,
        timings: StageTimings,
        #[serde(with = "timefmt")]
        produced_at: DateTime<Utc>,
    },
}

impl Outcome {
    pub fn recording_id(&self) -> &RecordingId {
        match self {
            Outcome::Prediction(r) => &r.recording_id,
            Outcome::ModelFailed { recording_id, .. }
            | Outcome::Rejected { recording_id, .. }
            | Outcome::Failed { recording_id, .. }
            | Outcome::Completed { recording_id, .. } => recording_id,
        }
    }

    /// Model this outcome settles, if it is per-model.
    pub fn model_id(&self) -> Option<&str> {
        match self {
            Outcome::Prediction(r) => Some(&r.model_id),
            Outcome::ModelFailed { model_id, .. } => Some(model_id),
            _ => None,
        }
    }

    pub fn produced_at(&self) -> DateTime<Utc> {
        match self {
            Outcome::Prediction(r) => r.produced_at,
            Outcome::ModelFailed { produced_at, .. }
            | Outcome::Rejected { produced_at, .. }
            | Outcome::Failed { produced_at, .. }
            | Outcome::Completed { produced_at, .. } => *produced_at,
        }
    }

    /// Whether no further processing of the recording should happen.
    pub fn is_terminal(&self) -> bool {
        matches!(self, Outcome::Rejected { .. } | Outcome::Failed { .. } | Outcome::Completed { .. })
    }
}

/// Where a recording is in the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProcessingStatus {
    Pending,
    Done,
    Rejected { code: String, reason: String },
    Failed { reason: String },
}

impl ProcessingStatus {
    /// Derives the status from a recording's outcome log (first terminal
    /// row wins).
    pub fn from_outcomes(outcomes: &[Outcome]) -> Self {
        outcomes
            .iter()
            .find_map(|o| match o {
                Outcome::Completed { .. } => Some(ProcessingStatus::Done),
                Outcome::Rejected { code, reason, .. } => {
                    Some(ProcessingStatus::Rejected { code: code.clone(), reason: reason.clone() })
                }
                Outcome::Failed { reason, .. } => Some(ProcessingStatus::Failed { reason: reason.clone() }),
                _ => None,
            })
            .unwrap_or(ProcessingStatus::Pending)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessingStatus::Pending => "pending",
            ProcessingStatus::Done => "done",
            ProcessingStatus::Rejected { .. } => "rejected",
            ProcessingStatus::Failed { .. } => "failed",
        }
    }
}
