//! Poll-and-infer pipeline.
//!
//! Every `poll_interval_s` the orchestrator pulls new records from vendor
//! feeds into the lake, lists index entries past its cursor, preprocesses
//! each one, runs every registered model and publishes stage-timed results.
//! Ticks fall on a fixed grid `origin + k * interval`, so a recording waits
//! for the next grid point after it becomes available.

mod clock;
mod config;
pub mod feed;
mod ingest;
mod orchestrator;

use std::sync::Mutex;

use chrono::{DateTime, Utc};
use ecg_core::{timefmt, RecordingId};
use ecg_lake::{Lake, LakeEntry, LakeError, Outcome, StoredRecording};
use serde::Serialize;
use thiserror::Error;

pub use clock::{Clock, Shutdown, SimClock};
pub use config::{ClockKind, InjectedDelays, PipelineConfig};
pub use feed::{FeedBatch, FeedError, FeedRecord, VendorFeed};
pub use ingest::{IngestError, IngestReceipt, IngestRequest, Ingestor};
pub use orchestrator::{stage_timings, Orchestrator, TickReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Lake(#[from] LakeError),
    #[error("cursor checkpoint: {0}")]
    Checkpoint(String),
}

/// What the orchestrator needs from storage. [`Lake`] implements it; tests
/// wrap it to inject faults.
pub trait Store: Send + Sync {
    fn list_since(&self, cursor: u64) -> Result<Vec<LakeEntry>, LakeError>;
    fn get_recording(&self, id: &RecordingId) -> Result<StoredRecording, LakeError>;
    fn outcomes(&self, id: &RecordingId) -> Vec<Outcome>;
    /// Appends the rows produced by `build`, which runs once the writer
    /// gate is held.
    fn publish(&self, build: &mut dyn FnMut() -> Vec<Outcome>) -> Result<Vec<Outcome>, LakeError>;
}

impl Store for Lake {
    fn list_since(&self, cursor: u64) -> Result<Vec<LakeEntry>, LakeError> {
        Lake::list_since(self, cursor)
    }

    fn get_recording(&self, id: &RecordingId) -> Result<StoredRecording, LakeError> {
        Lake::get_recording(self, id)
    }

    fn outcomes(&self, id: &RecordingId) -> Vec<Outcome> {
        Lake::outcomes(self, id)
    }

    fn publish(&self, build: &mut dyn FnMut() -> Vec<Outcome>) -> Result<Vec<Outcome>, LakeError> {
        self.append_outcomes_with(build)
    }
}

/// Liveness data exposed through the health endpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatusSnapshot {
    pub ticks: u64,
    #[serde(with = "timefmt::option")]
    pub last_tick_at: Option<DateTime<Utc>>,
    pub cursor: u64,
    pub processed: u64,
    pub last_error: Option<String>,
}

#[derive(Debug, Default)]
pub struct PipelineStatus {
    inner: Mutex<StatusSnapshot>,
}

impl PipelineStatus {
    pub fn snapshot(&self) -> StatusSnapshot {
        self.inner.lock().unwrap().clone()
    }

    pub(crate) fn update(&self, f: impl FnOnce(&mut StatusSnapshot)) {
        f(&mut self.inner.lock().unwrap())
    }
}
