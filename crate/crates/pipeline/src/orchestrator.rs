use std::collections::{BTreeMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use ecg_core::timefmt::seconds_between;
use ecg_core::{predict_all, preprocess, DomainError, PredictionResult, RecordingId, Registry, StageTimings};
use ecg_lake::fsutil::write_atomic;
use ecg_lake::{IngestMeta, LakeEntry, LakeError, Outcome};
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::{
    Clock, InjectedDelays, IngestRequest, Ingestor, PipelineConfig, PipelineError, PipelineStatus, Shutdown, Store,
    VendorFeed,
};

const CHECKPOINT_FILE: &str = "pipeline.cursor.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    index_seq: u64,
    #[serde(default)]
    feeds: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub at: Option<DateTime<Utc>>,
    /// Records pulled from vendor feeds into the lake.
    pub fetched: usize,
    /// Entries handed to workers.
    pub dequeued: usize,
    /// Recordings that reached a terminal outcome this tick.
    pub processed: Vec<RecordingId>,
    pub cursor: u64,
}

/// Stage decomposition for one recording.
///
/// Upload is the transfer into the platform (`received_at - fetched_at`);
/// records pulled from a vendor feed were never uploaded by the platform and
/// get 0. Pickup runs from availability (vendor time for pulled records,
/// durable receive time otherwise) to dequeue. Injected values, when set,
/// replace the measured pickup / inference / publish durations.
pub fn stage_timings(
    entry: &LakeEntry,
    ingest: &IngestMeta,
    dequeued_at: DateTime<Utc>,
    inference_s: f64,
    publish_s: f64,
    injected: &InjectedDelays,
) -> Result<StageTimings, DomainError> {
    let upload_s = match ingest.available_at {
        Some(_) => 0.0,
        None => seconds_between(ingest.fetched_at, entry.received_at).max(0.0),
    };
    let available = ingest.available_at.unwrap_or(entry.received_at);
    let pickup_s = seconds_between(available, dequeued_at).max(0.0);
    StageTimings::new(
        upload_s,
        injected.pickup_s.unwrap_or(pickup_s),
        injected.inference_s.unwrap_or(inference_s),
        injected.publish_s.unwrap_or(publish_s),
    )
}

pub struct Orchestrator {
    store: Arc<dyn Store>,
    registry: Arc<Registry>,
    config: PipelineConfig,
    clock: Clock,
    ingestor: Option<Ingestor>,
    feeds: Vec<VendorFeed>,
    checkpoint_path: Option<PathBuf>,
    checkpoint: Mutex<Checkpoint>,
    status: Arc<PipelineStatus>,
}

impl Orchestrator {
    /// Restores the cursor from `config.state_dir` when one is set.
    pub fn new(
        store: Arc<dyn Store>,
        registry: Arc<Registry>,
        config: PipelineConfig,
        clock: Clock,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if registry.is_empty() {
            return Err(PipelineError::Config("model registry is empty".into()));
        }
        let checkpoint_path = config.state_dir.as_ref().map(|d| d.join(CHECKPOINT_FILE));
        let checkpoint = match &checkpoint_path {
            Some(p) => match std::fs::read(p) {
                Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| PipelineError::Checkpoint(e.to_string()))?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Checkpoint::default(),
                Err(e) => return Err(PipelineError::Checkpoint(e.to_string())),
            },
            None => Checkpoint::default(),
        };
        let status = Arc::new(PipelineStatus::default());
        status.update(|s| s.cursor = checkpoint.index_seq);
        Ok(Orchestrator {
            store,
            registry,
            config,
            clock,
            ingestor: None,
            feeds: Vec::new(),
            checkpoint_path,
            checkpoint: Mutex::new(checkpoint),
            status,
        })
    }

    /// Vendor feeds polled at the start of every tick.
    pub fn with_feeds(mut self, ingestor: Ingestor, feeds: Vec<VendorFeed>) -> Self {
        self.ingestor = Some(ingestor);
        self.feeds = feeds;
        self
    }

    pub fn status(&self) -> Arc<PipelineStatus> {
        self.status.clone()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn cursor(&self) -> u64 {
        self.checkpoint.lock().unwrap().index_seq
    }

    fn persist(&self, cp: &Checkpoint) -> Result<(), PipelineError> {
        if let Some(path) = &self.checkpoint_path {
            let bytes = serde_json::to_vec(cp).expect("checkpoint serializes");
            write_atomic(path, &bytes, true).map_err(|e| PipelineError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    /// Entries past `cursor` and the cursor after them.
    pub fn poll_once(&self, cursor: u64) -> Result<(Vec<LakeEntry>, u64), LakeError> {
        let entries = self.store.list_since(cursor)?;
        let next = entries.iter().map(|e| e.index_seq).max().unwrap_or(cursor).max(cursor);
        Ok((entries, next))
    }

    /// Preprocesses and scores one entry, then publishes its outcomes.
    /// Models already settled for the recording are skipped; a recording
    /// with a terminal outcome is left alone.
    pub fn process_entry(&self, entry: &LakeEntry, dequeued_at: DateTime<Utc>) -> Result<Vec<Outcome>, LakeError> {
        let id = &entry.recording_id;
        let existing = self.store.outcomes(id);
        if existing.iter().any(Outcome::is_terminal) {
            return Ok(Vec::new());
        }
        let settled: HashSet<String> = existing.iter().filter_map(|o| o.model_id().map(str::to_string)).collect();
        let stored = self.store.get_recording(id)?;

        let started = Instant::now();
        let window = match preprocess::<f64>(&stored.recording, &self.config.dsp) {
            Ok(w) => w,
            Err(e) => {
                let clock = &self.clock;
                return self.store.publish(&mut || {
                    vec![Outcome::Rejected {
                        recording_id: id.clone(),
                        code: e.source.code().into(),
                        reason: e.to_string(),
                        produced_at: clock.now(),
                    }]
                });
            }
        };
        let predictions = predict_all(&window, &self.registry);
        let inference_s = started.elapsed().as_secs_f64();

        let publish_started = Instant::now();
        let mut build = || {
            let publish_s = publish_started.elapsed().as_secs_f64();
            let produced_at = self.clock.now();
            let timings = match stage_timings(
                entry,
                &stored.ingest,
                dequeued_at,
                inference_s,
                publish_s,
                &self.config.injected_delays,
            ) {
                Ok(t) => t,
                Err(e) => {
                    return vec![Outcome::Failed { recording_id: id.clone(), reason: e.to_string(), produced_at }];
                }
            };
            let mut rows: Vec<Outcome> = predictions
                .iter()
                .filter(|p| !settled.contains(&p.model_id))
                .map(|p| {
                    let failed = |code: &str, message: String| Outcome::ModelFailed {
                        recording_id: id.clone(),
                        model_id: p.model_id.clone(),
                        code: code.into(),
                        message,
                        produced_at,
                    };
                    match &p.probability {
                        Ok(prob) => PredictionResult::new(id.clone(), &p.model_id, *prob, p.threshold, timings, produced_at)
                            .map(Outcome::Prediction)
                            .unwrap_or_else(|e| failed("DomainError", e.to_string())),
                        Err(e) => failed(e.code(), e.to_string()),
                    }
                })
                .collect();
            rows.push(Outcome::Completed { recording_id: id.clone(), timings, produced_at });
            rows
        };
        self.store.publish(&mut build)
    }

    /// Pulls new vendor records into the lake. Bad records are logged and
    /// skipped; the feed cursor moves past them.
    pub fn fetch_feeds(&self) -> usize {
        let Some(ingestor) = &self.ingestor else { return 0 };
        let mut fetched = 0;
        for feed in &self.feeds {
            let key = feed.device.as_str().to_string();
            let since = self.checkpoint.lock().unwrap().feeds.get(&key).cloned().unwrap_or_else(|| "0".into());
            let batch = match feed.fetch(&since) {
                Ok(b) => b,
                Err(e) => {
                    warn!(feed = %key, error = %e, "feed poll failed");
                    self.status.update(|s| s.last_error = Some(format!("{key} feed: {e}")));
                    continue;
                }
            };
            for rec in batch.records {
                let req = IngestRequest {
                    bytes: rec.bytes,
                    declared: Some(feed.device),
                    external_id: rec.external_id,
                    source_uri: feed.records_url(),
                    fetched_at: Some(self.clock.now()),
                    available_at: Some(rec.available_at),
                };
                match ingestor.ingest(req) {
                    Ok(r) if !r.duplicate => fetched += 1,
                    Ok(_) => {}
                    Err(e) => warn!(feed = %key, code = e.code(), error = %e, "vendor record quarantined"),
                }
            }
            let mut cp = self.checkpoint.lock().unwrap();
            cp.feeds.insert(key, batch.cursor);
            if let Err(e) = self.persist(&cp) {
                warn!(error = %e, "checkpoint write failed");
            }
        }
        fetched
    }

    /// One poll: fetch feeds, list new entries, process them on the worker
    /// pool, advance and persist the cursor. On shutdown, workers finish the
    /// entry in hand and take no more; the cursor only moves past a gap-free
    /// prefix of finished entries.
    pub fn tick(&self, shutdown: Option<&Shutdown>) -> Result<TickReport, PipelineError> {
        let at = self.clock.now();
        let fetched = self.fetch_feeds();
        let cursor = self.cursor();
        let (entries, _) = match self.poll_once(cursor) {
            Ok(x) => x,
            Err(e) => {
                self.status.update(|s| {
                    s.ticks += 1;
                    s.last_tick_at = Some(at);
                    s.last_error = Some(e.to_string());
                });
                return Err(e.into());
            }
        };
        let dequeued = entries.len();
        let queue = Mutex::new(entries.iter().cloned().collect::<VecDeque<_>>());
        let done = Mutex::new(Vec::<(u64, RecordingId, bool)>::new());
        let workers = self.config.workers.min(entries.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if shutdown.is_some_and(Shutdown::is_requested) {
                        break;
                    }
                    let Some(entry) = queue.lock().unwrap().pop_front() else { break };
                    let dequeued_at = self.clock.now();
                    match catch_unwind(AssertUnwindSafe(|| self.process_entry(&entry, dequeued_at))) {
                        Ok(Ok(rows)) => done.lock().unwrap().push((entry.index_seq, entry.recording_id.clone(), !rows.is_empty())),
                        Ok(Err(e)) => warn!(recording = %entry.recording_id, error = %e, "processing deferred to next tick"),
                        Err(panic) => {
                            let msg = panic
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| panic.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "unknown panic".into());
                            let failed = Outcome::Failed {
                                recording_id: entry.recording_id.clone(),
                                reason: format!("worker panicked: {msg}"),
                                produced_at: self.clock.now(),
                            };
                            match self.store.publish(&mut || vec![failed.clone()]) {
                                Ok(_) => done.lock().unwrap().push((entry.index_seq, entry.recording_id.clone(), true)),
                                Err(e) => warn!(error = %e, "could not record worker failure"),
                            }
                        }
                    }
                });
            }
        });

        let mut done = done.into_inner().unwrap();
        done.sort_by_key(|(seq, ..)| *seq);
        let finished: HashSet<u64> = done.iter().map(|(s, ..)| *s).collect();
        let mut new_cursor = cursor;
        for e in &entries {
            if finished.contains(&e.index_seq) && e.index_seq == new_cursor + 1 {
                new_cursor = e.index_seq;
            } else {
                break;
            }
        }
        {
            let mut cp = self.checkpoint.lock().unwrap();
            cp.index_seq = new_cursor;
            self.persist(&cp)?;
        }
        // entries that were already settled advance the cursor but are not news
        let processed: Vec<RecordingId> = done.into_iter().filter(|(.., fresh)| *fresh).map(|(_, id, _)| id).collect();
        self.status.update(|s| {
            s.ticks += 1;
            s.last_tick_at = Some(at);
            s.cursor = new_cursor;
            s.processed += processed.len() as u64;
            s.last_error = None;
        });
        debug!(cursor = new_cursor, dequeued, processed = processed.len(), "tick");
        Ok(TickReport { at: Some(at), fetched, dequeued, processed, cursor: new_cursor })
    }

    /// Ticks at `origin + k * poll_interval_s` until shutdown. Ticks missed
    /// while a slow batch was running are skipped, not replayed.
    pub fn run_loop(&self, shutdown: &Shutdown) {
        let origin = self.clock.now();
        let interval_ms = ((self.config.poll_interval_s * 1000.0).round() as i64).max(1);
        let mut k: i64 = 0;
        loop {
            let target = origin + Duration::milliseconds(k * interval_ms);
            if !self.clock.sleep_until(target, shutdown) {
                break;
            }
            if let Err(e) = self.tick(Some(shutdown)) {
                warn!(error = %e, "tick failed; retrying next interval");
            }
            if shutdown.is_requested() {
                break;
            }
            k += 1;
            let elapsed = (self.clock.now() - origin).num_milliseconds();
            if elapsed > k * interval_ms {
                k = elapsed / interval_ms + 1;
            }
        }
    }
}
