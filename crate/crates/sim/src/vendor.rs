//! Kardia- and Fitbit-like query APIs.
//!
//! `GET /records?since=<cursor>` returns every record with sequence number
//! above `since` whose emit time is at or before the simulator clock. Emit
//! times are non-decreasing in sequence order, so a client that stores the
//! returned cursor never misses a record.

use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use ecg_core::{timefmt, DeviceKind};
use ecg_pipeline::Clock;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::synth::SynthSpec;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("reading schedule: {0}")]
    Io(#[from] std::io::Error),
    #[error("schedule: {0}")]
    Parse(String),
}

/// One scheduled record in a schedule file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledRecord {
    /// Seconds after the simulator origin.
    pub at_s: f64,
    pub external_id: String,
    #[serde(flatten)]
    pub spec: SynthSpec,
}

/// ```toml
/// [[records]]
/// at_s = 10.0
/// external_id = "RC-1001"
/// seed = 7
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default)]
    pub records: Vec<ScheduledRecord>,
}

impl Schedule {
    pub fn from_toml(text: &str) -> Result<Self, ScheduleError> {
        let s: Schedule = toml::from_str(text).map_err(|e| ScheduleError::Parse(e.to_string()))?;
        if let Some(r) = s.records.iter().find(|r| !(r.at_s.is_finite() && r.at_s >= 0.0)) {
            return Err(ScheduleError::Parse(format!("at_s must be >= 0, got {}", r.at_s)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScheduleError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// `count` records `every` seconds apart starting at `first_at_s`, seeds
    /// derived from `seed`.
    pub fn periodic(count: usize, first_at_s: f64, every_s: f64, seed: u64) -> Self {
        let records = (0..count)
            .map(|i| ScheduledRecord {
                at_s: first_at_s + i as f64 * every_s,
                external_id: format!("SIM-{:04}", i % 50),
                spec: SynthSpec::seeded(seed.wrapping_add(i as u64)),
            })
            .collect();
        Schedule { records }
    }
}

#[derive(Debug, Clone)]
struct Emitted {
    seq: u64,
    emit_at: DateTime<Utc>,
    external_id: String,
    body: Box<RawValue>,
}

pub struct VendorSim {
    device: DeviceKind,
    clock: Clock,
    records: Mutex<Vec<Emitted>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct WireRecord<'a> {
    #[serde(with = "timefmt")]
    available_at: DateTime<Utc>,
    external_id: &'a str,
    record: &'a RawValue,
}

#[derive(Serialize)]
struct WireBatch<'a> {
    cursor: String,
    records: Vec<WireRecord<'a>>,
}

#[derive(Debug, Serialize)]
struct WireError {
    error: String,
}

impl VendorSim {
    pub fn new(device: DeviceKind, clock: Clock) -> Self {
        assert!(device != DeviceKind::AppleWatch, "the watch has no query API; use the upload path");
        VendorSim { device, clock, records: Mutex::new(Vec::new()) }
    }

    /// Payloads are built with `recorded_at` 30 s before emission.
    pub fn with_schedule(device: DeviceKind, clock: Clock, origin: DateTime<Utc>, schedule: &Schedule) -> Self {
        let sim = Self::new(device, clock);
        let mut rows: Vec<&ScheduledRecord> = schedule.records.iter().collect();
        rows.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
        for r in rows {
            let emit_at = origin + Duration::milliseconds((r.at_s * 1000.0).round() as i64);
            let recorded_at = emit_at - Duration::milliseconds((r.spec.duration_s * 1000.0).round() as i64);
            sim.push(emit_at, &r.external_id, r.spec.payload(device, recorded_at));
        }
        sim
    }

    pub fn device(&self) -> DeviceKind {
        self.device
    }

    /// Adds a record. Emit times earlier than the last one are raised to it,
    /// which keeps cursors safe.
    pub fn push(&self, emit_at: DateTime<Utc>, external_id: &str, payload: Vec<u8>) -> u64 {
        let text = String::from_utf8(payload).expect("vendor payloads are JSON text");
        let body = RawValue::from_string(text).expect("vendor payloads are JSON");
        let mut recs = self.records.lock().unwrap();
        let emit_at = recs.last().map_or(emit_at, |l| l.emit_at.max(emit_at));
        let seq = recs.len() as u64 + 1;
        recs.push(Emitted { seq, emit_at: timefmt::truncate_ms(emit_at), external_id: external_id.into(), body });
        seq
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Response body for `since`, or `None` for a malformed cursor.
    pub fn batch_json(&self, since: &str) -> Option<String> {
        let since: u64 = since.trim().parse().ok()?;
        let now = self.clock.now();
        let recs = self.records.lock().unwrap();
        let visible: Vec<&Emitted> = recs.iter().filter(|r| r.seq > since && r.emit_at <= now).collect();
        let cursor = visible.last().map_or(since, |r| r.seq);
        let batch = WireBatch {
            cursor: cursor.to_string(),
            records: visible
                .iter()
                .map(|r| WireRecord { available_at: r.emit_at, external_id: &r.external_id, record: &r.body })
                .collect(),
        };
        Some(serde_json::to_string(&batch).expect("batch serializes"))
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new().route("/records", get(records)).with_state(self)
    }
}

#[derive(Deserialize)]
struct SinceQuery {
    since: Option<String>,
}

async fn records(State(sim): State<Arc<VendorSim>>, q: Result<Query<SinceQuery>, axum::extract::rejection::QueryRejection>) -> Response {
    let since = match q {
        Ok(Query(q)) => q.since.unwrap_or_else(|| "0".into()),
        Err(e) => return (StatusCode::BAD_REQUEST, Json(WireError { error: e.body_text() })).into_response(),
    };
    match sim.batch_json(&since) {
        Some(body) => ([(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response(),
        None => (StatusCode::BAD_REQUEST, Json(WireError { error: format!("malformed cursor {since:?}") })).into_response(),
    }
}
