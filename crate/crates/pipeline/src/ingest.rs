//! Payload → lake: parse, pseudonymize, store.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use ecg_core::{parse_payload, AdapterConfig, AdapterError, DeviceKind, RawDeviceRecord, RecordingId, StudyId};
use ecg_lake::{Lake, LakeEntry, LakeError, PutOutcome};
use thiserror::Error;

use crate::Clock;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Lake(#[from] LakeError),
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Adapter(e) => e.code(),
            IngestError::Lake(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestRequest {
    pub bytes: Vec<u8>,
    /// Device the sender claims; checked against the detected format.
    pub declared: Option<DeviceKind>,
    pub external_id: String,
    pub source_uri: String,
    /// When the sender started the transfer; defaults to the receive time.
    pub fetched_at: Option<DateTime<Utc>>,
    /// Vendor-side availability time for pulled records.
    pub available_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReceipt {
    pub entry: LakeEntry,
    pub duplicate: bool,
}

impl IngestReceipt {
    pub fn recording_id(&self) -> &RecordingId {
        &self.entry.recording_id
    }

    pub fn study_id(&self) -> &StudyId {
        &self.entry.study_id
    }
}

#[derive(Debug, Clone)]
pub struct Ingestor {
    lake: Arc<Lake>,
    adapters: AdapterConfig,
    clock: Clock,
}

impl Ingestor {
    pub fn new(lake: Arc<Lake>, adapters: AdapterConfig, clock: Clock) -> Self {
        Ingestor { lake, adapters, clock }
    }

    pub fn lake(&self) -> &Arc<Lake> {
        &self.lake
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    /// Returns once the index row is durable. A payload already in the lake
    /// comes back flagged as a duplicate without touching the registry.
    pub fn ingest(&self, req: IngestRequest) -> Result<IngestReceipt, IngestError> {
        let reading = parse_payload(&req.bytes, &self.adapters)?;
        if let Some(declared) = req.declared {
            if declared != reading.device {
                return Err(AdapterError::DeviceMismatch { declared, detected: reading.device }.into());
            }
        }
        if let Some(entry) = self.lake.entry(&reading.recording_id) {
            return Ok(IngestReceipt { entry, duplicate: true });
        }
        let study = self.lake.register_study(&req.external_id)?;
        let received_at = self.clock.now();
        let device = reading.device;
        let recording = reading.into_recording(study, received_at);
        let raw = RawDeviceRecord {
            device,
            bytes: req.bytes,
            source_uri: req.source_uri,
            fetched_at: req.fetched_at.unwrap_or(received_at),
            available_at: req.available_at,
        };
        Ok(match self.lake.put_recording(&raw, &recording)? {
            PutOutcome::Inserted(entry) => IngestReceipt { entry, duplicate: false },
            PutOutcome::AlreadyExists(entry) => IngestReceipt { entry, duplicate: true },
        })
    }
}
