//! Local data lake.
//!
//! ```text
//! <root>/
//!   secret.key                 instance key for study pseudonyms (hex)
//!   registry.json              external id -> study id (kept apart from data)
//!   index.jsonl                one LakeEntry per line, append-only
//!   outcomes.jsonl             one Outcome per line, append-only
//!   blobs/<h[0:2]>/<h>         raw payload bytes, h = SHA-256 of the bytes
//!   canonical/<h[0:2]>/<h>.json  parsed recording + ingest metadata
//! ```
//!
//! Blobs and canonical files are written temp-then-rename before the index
//! row is appended, so a crash in between leaves an orphan blob that no
//! reader can see and a later put simply completes. Index appends go through
//! one writer gate that also assigns `index_seq`.

pub mod fsutil;
mod outcome;
mod registry;

use std::collections::HashMap;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use ecg_core::timefmt;
use ecg_core::{DeviceKind, DomainError, EcgRecording, PredictionResult, RawDeviceRecord, RecordingId, StudyId};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use outcome::{Outcome, ProcessingStatus};

const KEY_FILE: &str = "secret.key";
const REGISTRY_FILE: &str = "registry.json";
const INDEX_FILE: &str = "index.jsonl";
const OUTCOMES_FILE: &str = "outcomes.jsonl";

#[derive(Debug, Error)]
pub enum LakeError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt lake data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Invalid(#[from] DomainError),
}

impl LakeError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        LakeError::Io { path: path.to_path_buf(), source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            LakeError::BadRequest(_) => "BadRequest",
            LakeError::NotFound(_) => "NotFound",
            LakeError::Io { .. } => "IoError",
            LakeError::Corrupt(_) => "Corrupt",
            LakeError::Invalid(_) => "InvalidRecord",
        }
    }
}

pub type Result<T, E = LakeError> = std::result::Result<T, E>;

/// One row of the metadata index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LakeEntry {
    pub index_seq: u64,
    pub recording_id: RecordingId,
    pub device: DeviceKind,
    pub study_id: StudyId,
    #[serde(with = "timefmt")]
    pub received_at: DateTime<Utc>,
    pub blob_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted(LakeEntry),
    AlreadyExists(LakeEntry),
}

impl PutOutcome {
    pub fn entry(&self) -> &LakeEntry {
        match self {
            PutOutcome::Inserted(e) | PutOutcome::AlreadyExists(e) => e,
        }
    }

    pub fn is_duplicate(&self) -> bool {
        matches!(self, PutOutcome::AlreadyExists(_))
    }
}

/// How the payload reached the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMeta {
    pub source_uri: String,
    #[serde(with = "timefmt")]
    pub fetched_at: DateTime<Utc>,
    #[serde(with = "timefmt::option", default, skip_serializing_if = "Option::is_none")]
    pub available_at: Option<DateTime<Utc>>,
}

/// Canonical file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecording {
    pub recording: EcgRecording,
    pub ingest: IngestMeta,
}

#[derive(Debug, Clone, Copy)]
pub struct LakeOptions {
    /// fsync files and directories after each write.
    pub sync: bool,
}

impl Default for LakeOptions {
    fn default() -> Self {
        LakeOptions { sync: true }
    }
}

/// Blob location relative to the lake root; a pure function of the id.
pub fn blob_path(id: &RecordingId) -> String {
    format!("blobs/{}/{}", id.shard(), id)
}

fn canonical_path(id: &RecordingId) -> String {
    format!("canonical/{}/{}.json", id.shard(), id)
}

struct LogWriter {
    file: File,
    len: u64,
}

#[derive(Default)]
struct IndexState {
    entries: Vec<LakeEntry>,
    by_id: HashMap<RecordingId, usize>,
}

struct IndexWriter {
    log: LogWriter,
    next_seq: u64,
}

pub struct Lake {
    root: PathBuf,
    opts: LakeOptions,
    registry: Mutex<registry::Registry>,
    gate: Mutex<IndexWriter>,
    index: RwLock<IndexState>,
    outcome_log: Mutex<LogWriter>,
    outcomes: RwLock<HashMap<RecordingId, Vec<Outcome>>>,
}

impl std::fmt::Debug for Lake {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lake").field("root", &self.root).finish_non_exhaustive()
    }
}

fn load_key(root: &Path, sync: bool) -> Result<Vec<u8>> {
    let path = root.join(KEY_FILE);
    match std::fs::read_to_string(&path) {
        Ok(s) => hex::decode(s.trim()).map_err(|e| LakeError::Corrupt(format!("{KEY_FILE}: {e}"))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let mut key = vec![0u8; 32];
            rand::rng().fill_bytes(&mut key);
            fsutil::write_atomic(&path, hex::encode(&key).as_bytes(), sync).map_err(|e| LakeError::io(&path, e))?;
            Ok(key)
        }
        Err(e) => Err(LakeError::io(&path, e)),
    }
}

fn open_log(path: &Path) -> Result<(LogWriter, Vec<String>)> {
    let (file, lines) = fsutil::open_log(path).map_err(|e| LakeError::io(path, e))?;
    let len = file.metadata().map_err(|e| LakeError::io(path, e))?.len();
    Ok((LogWriter { file, len }, lines))
}

impl Lake {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with(root, LakeOptions::default())
    }

    pub fn open_with(root: impl Into<PathBuf>, opts: LakeOptions) -> Result<Self> {
        let root = root.into();
        for sub in ["", "blobs", "canonical"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| LakeError::io(&p, e))?;
        }
        let key = load_key(&root, opts.sync)?;
        let registry = registry::Registry::open(root.join(REGISTRY_FILE), key, opts.sync)?;

        let (index_log, lines) = open_log(&root.join(INDEX_FILE))?;
        let mut index = IndexState::default();
        for (n, line) in lines.iter().enumerate() {
            let entry: LakeEntry = serde_json::from_str(line)
                .map_err(|e| LakeError::Corrupt(format!("{INDEX_FILE} line {}: {e}", n + 1)))?;
            if entry.index_seq != n as u64 + 1 {
                return Err(LakeError::Corrupt(format!(
                    "{INDEX_FILE} line {} has index_seq {}",
                    n + 1,
                    entry.index_seq
                )));
            }
            index.by_id.insert(entry.recording_id.clone(), index.entries.len());
            index.entries.push(entry);
        }
        let next_seq = index.entries.len() as u64 + 1;

        let (outcome_log, lines) = open_log(&root.join(OUTCOMES_FILE))?;
        let mut outcomes: HashMap<RecordingId, Vec<Outcome>> = HashMap::new();
        for (n, line) in lines.iter().enumerate() {
            let o: Outcome = serde_json::from_str(line)
                .map_err(|e| LakeError::Corrupt(format!("{OUTCOMES_FILE} line {}: {e}", n + 1)))?;
            outcomes.entry(o.recording_id().clone()).or_default().push(o);
        }

        Ok(Lake {
            root,
            opts,
            registry: Mutex::new(registry),
            gate: Mutex::new(IndexWriter { log: index_log, next_seq }),
            index: RwLock::new(index),
            outcome_log: Mutex::new(outcome_log),
            outcomes: RwLock::new(outcomes),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Returns the study pseudonym for `external_id`, minting it on first use.
    pub fn register_study(&self, external_id: &str) -> Result<StudyId> {
        self.registry.lock().unwrap().register(external_id)
    }

    pub fn study_count(&self) -> usize {
        self.registry.lock().unwrap().len()
    }

    /// Writes the raw blob and the canonical file for `parsed`; returns the
    /// blob path. Nothing is indexed, so the files stay invisible until
    /// [`Lake::put_recording`] appends the row.
    pub fn write_blobs(&self, raw: &RawDeviceRecord, parsed: &EcgRecording) -> Result<String> {
        let id = &parsed.recording_id;
        let blob_rel = blob_path(id);
        let blob = self.root.join(&blob_rel);
        fsutil::write_atomic(&blob, &raw.bytes, self.opts.sync).map_err(|e| LakeError::io(&blob, e))?;
        let stored = StoredRecording {
            recording: parsed.clone(),
            ingest: IngestMeta {
                source_uri: raw.source_uri.clone(),
                fetched_at: timefmt::truncate_ms(raw.fetched_at),
                available_at: raw.available_at.map(timefmt::truncate_ms),
            },
        };
        let canon = self.root.join(canonical_path(id));
        let bytes = serde_json::to_vec(&stored).map_err(|e| LakeError::Corrupt(e.to_string()))?;
        fsutil::write_atomic(&canon, &bytes, self.opts.sync).map_err(|e| LakeError::io(&canon, e))?;
        Ok(blob_rel)
    }

    /// Stores a parsed recording. A recording already indexed returns
    /// `AlreadyExists` and leaves the index untouched.
    pub fn put_recording(&self, raw: &RawDeviceRecord, parsed: &EcgRecording) -> Result<PutOutcome> {
        if raw.bytes.is_empty() {
            return Err(LakeError::BadRequest("payload is empty".into()));
        }
        if RecordingId::of_bytes(&raw.bytes) != parsed.recording_id {
            return Err(LakeError::BadRequest("recording_id does not match the payload digest".into()));
        }
        if raw.device != parsed.device {
            return Err(LakeError::BadRequest("raw and parsed device kinds differ".into()));
        }
        parsed.validate()?;
        if let Some(e) = self.entry(&parsed.recording_id) {
            return Ok(PutOutcome::AlreadyExists(e));
        }

        let blob_rel = self.write_blobs(raw, parsed)?;

        let mut gate = self.gate.lock().unwrap();
        if let Some(e) = self.entry(&parsed.recording_id) {
            return Ok(PutOutcome::AlreadyExists(e));
        }
        let entry = LakeEntry {
            index_seq: gate.next_seq,
            recording_id: parsed.recording_id.clone(),
            device: parsed.device,
            study_id: parsed.study_id.clone(),
            received_at: timefmt::truncate_ms(parsed.received_at),
            blob_path: blob_rel,
        };
        let line = serde_json::to_string(&entry).expect("entry serializes");
        let path = self.root.join(INDEX_FILE);
        let len = gate.log.len;
        gate.log.len = fsutil::append_line(&mut gate.log.file, len, &line, self.opts.sync)
            .map_err(|e| LakeError::io(&path, e))?;
        gate.next_seq += 1;
        {
            let mut index = self.index.write().unwrap();
            let pos = index.entries.len();
            index.by_id.insert(entry.recording_id.clone(), pos);
            index.entries.push(entry.clone());
        }
        Ok(PutOutcome::Inserted(entry))
    }

    /// Entries with `index_seq > cursor`, ascending.
    pub fn list_since(&self, cursor: u64) -> Result<Vec<LakeEntry>> {
        let index = self.index.read().unwrap();
        // index_seq n lives at position n - 1
        let start = (cursor.min(index.entries.len() as u64)) as usize;
        Ok(index.entries[start..].to_vec())
    }

    pub fn entry(&self, id: &RecordingId) -> Option<LakeEntry> {
        let index = self.index.read().unwrap();
        index.by_id.get(id).map(|&i| index.entries[i].clone())
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries_for_study(&self, study: &StudyId) -> Vec<LakeEntry> {
        self.index.read().unwrap().entries.iter().filter(|e| &e.study_id == study).cloned().collect()
    }

    fn known(&self, id: &RecordingId) -> Result<LakeEntry> {
        self.entry(id).ok_or_else(|| LakeError::NotFound(format!("recording {id}")))
    }

    /// Raw payload bytes, digest-checked.
    pub fn read_blob(&self, id: &RecordingId) -> Result<Vec<u8>> {
        let entry = self.known(id)?;
        let path = self.root.join(&entry.blob_path);
        let bytes = std::fs::read(&path).map_err(|e| LakeError::io(&path, e))?;
        if RecordingId::of_bytes(&bytes) != *id {
            return Err(LakeError::Corrupt(format!("blob {} fails its digest check", entry.blob_path)));
        }
        Ok(bytes)
    }

    pub fn get_recording(&self, id: &RecordingId) -> Result<StoredRecording> {
        self.known(id)?;
        let path = self.root.join(canonical_path(id));
        let bytes = std::fs::read(&path).map_err(|e| LakeError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| LakeError::Corrupt(format!("{}: {e}", path.display())))
    }

    /// Appends an outcome for an indexed recording.
    pub fn append_outcome(&self, outcome: &Outcome) -> Result<()> {
        self.known(outcome.recording_id())?;
        let line = serde_json::to_string(outcome).map_err(|e| LakeError::BadRequest(e.to_string()))?;
        let path = self.root.join(OUTCOMES_FILE);
        let mut log = self.outcome_log.lock().unwrap();
        let len = log.len;
        log.len = fsutil::append_line(&mut log.file, len, &line, self.opts.sync).map_err(|e| LakeError::io(&path, e))?;
        self.outcomes
            .write()
            .unwrap()
            .entry(outcome.recording_id().clone())
            .or_default()
            .push(outcome.clone());
        Ok(())
    }

    /// Appends a batch built while holding the outcome writer gate, so the
    /// builder observes any time spent queueing behind other writers. All
    /// rows land in one write.
    pub fn append_outcomes_with<F>(&self, build: F) -> Result<Vec<Outcome>>
    where
        F: FnOnce() -> Vec<Outcome>,
    {
        let path = self.root.join(OUTCOMES_FILE);
        let mut log = self.outcome_log.lock().unwrap();
        let batch = build();
        let mut text = String::new();
        for o in &batch {
            self.known(o.recording_id())?;
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&serde_json::to_string(o).map_err(|e| LakeError::BadRequest(e.to_string()))?);
        }
        if batch.is_empty() {
            return Ok(batch);
        }
        let len = log.len;
        log.len = fsutil::append_line(&mut log.file, len, &text, self.opts.sync).map_err(|e| LakeError::io(&path, e))?;
        let mut map = self.outcomes.write().unwrap();
        for o in &batch {
            map.entry(o.recording_id().clone()).or_default().push(o.clone());
        }
        Ok(batch)
    }

    pub fn put_result(&self, result: &PredictionResult) -> Result<()> {
        if !(0.0..=1.0).contains(&result.probability) || result.label != (result.probability >= result.threshold) {
            return Err(LakeError::BadRequest("prediction violates its invariants".into()));
        }
        self.append_outcome(&Outcome::Prediction(result.clone()))
    }

    /// Outcome rows for a recording in append order.
    pub fn outcomes(&self, id: &RecordingId) -> Vec<Outcome> {
        self.outcomes.read().unwrap().get(id).cloned().unwrap_or_default()
    }

    /// Predictions for a recording ordered by `produced_at`, then model id.
    pub fn get_results(&self, id: &RecordingId) -> Result<Vec<PredictionResult>> {
        self.known(id)?;
        let mut results: Vec<PredictionResult> = self
            .outcomes(id)
            .into_iter()
            .filter_map(|o| match o {
                Outcome::Prediction(r) => Some(r),
                _ => None,
            })
            .collect();
        results.sort_by(|a, b| a.produced_at.cmp(&b.produced_at).then_with(|| a.model_id.cmp(&b.model_id)));
        Ok(results)
    }

    pub fn status(&self, id: &RecordingId) -> Result<ProcessingStatus> {
        self.known(id)?;
        Ok(ProcessingStatus::from_outcomes(&self.outcomes(id)))
    }

    /// Cheap reachability probe for health checks.
    pub fn check(&self) -> Result<()> {
        let path = self.root.join(INDEX_FILE);
        std::fs::metadata(&path).map(|_| ()).map_err(|e| LakeError::io(&path, e))
    }
}
