//! Stage-timing trials.
//!
//! Each trial runs one recording through the whole platform: acquisition,
//! upload (watch) or vendor availability (Kardia, Fitbit), pickup by the
//! poller, inference, publish, and finally a read of `/v1/results` over
//! HTTP. The platform, its API and the vendor simulator all run in-process.
//!
//! `injected` mode fixes the pickup / inference / publish durations so the
//! reported means are exact; `wall` mode reports what this build measures.
//! With the simulated clock the driver moves time itself and triggers each
//! poll on the `origin + k * interval` grid, so a 30 s interval costs no
//! real waiting.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Duration, TimeZone, Utc};
use ecg_api::{FeedConfig, Platform, PlatformConfig};
use ecg_core::inference::fixture::CnnPlan;
use ecg_core::{DeviceKind, RecordingId, Registry, StageTimings, ACQUISITION_S};
use ecg_pipeline::{ClockKind, Clock, InjectedDelays, Shutdown};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::write_fixture_models;
use crate::server::BackgroundServer;
use crate::synth::SynthSpec;
use crate::vendor::VendorSim;
use crate::watch::post_recording;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    Injected,
    Wall,
}

/// Column headings of the published turnaround table, in order.
pub const TABLE_COLUMNS: [&str; 7] = [
    "Device",
    "Time to record ECG",
    "Mean time for data to be uploaded to AWS S3",
    "Mean time for new ECG data to be picked up by the backend",
    "Mean time to run predictive models on the data",
    "Mean turnaround time for results to be displayed on the dashboard",
    "Mean time for the entire process",
];

/// Stage durations reported for the original deployment.
pub fn reference_delays(device: DeviceKind) -> InjectedDelays {
    let inference = match device {
        DeviceKind::AppleWatch => 13.51,
        _ => 11.49,
    };
    InjectedDelays { pickup_s: Some(19.17), inference_s: Some(inference), publish_s: Some(2.35) }
}

/// Transfer time for uploads; vendor-pulled records have none.
pub fn reference_upload_s(device: DeviceKind) -> f64 {
    match device {
        DeviceKind::AppleWatch => 0.7,
        _ => 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct TrialOptions {
    pub device: DeviceKind,
    pub n: usize,
    pub mode: TrialMode,
    pub clock: ClockKind,
    pub poll_interval_s: f64,
    pub seed: u64,
    /// Injected-mode stage durations; `None` fields use [`reference_delays`].
    pub delays: InjectedDelays,
    /// Simulated upload transfer for watch uploads; `None` uses
    /// [`reference_upload_s`]. Ignored with the real clock, where upload is
    /// measured.
    pub upload_s: Option<f64>,
    /// `models.toml`; when absent, fixture models are generated from `plan`.
    pub models_file: Option<PathBuf>,
    pub plan: CnnPlan,
    /// Polls to wait for a terminal result before failing a trial.
    pub max_ticks: usize,
}

impl TrialOptions {
    pub fn new(device: DeviceKind, n: usize, mode: TrialMode) -> Self {
        TrialOptions {
            device,
            n,
            mode,
            clock: ClockKind::Simulated,
            poll_interval_s: 30.0,
            seed: 1,
            delays: InjectedDelays::default(),
            upload_s: None,
            models_file: None,
            plan: CnnPlan::default(),
            max_ticks: 3,
        }
    }

    fn effective_delays(&self) -> InjectedDelays {
        let r = reference_delays(self.device);
        InjectedDelays {
            pickup_s: self.delays.pickup_s.or(r.pickup_s),
            inference_s: self.delays.inference_s.or(r.inference_s),
            publish_s: self.delays.publish_s.or(r.publish_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Seconds between the preceding poll and the recording becoming available.
    pub arrival_offset_s: f64,
    pub recording_id: Option<String>,
    /// Result status read after upload and after each poll ("absent" when the
    /// record has not reached the lake yet).
    pub statuses: Vec<String>,
    pub polls: usize,
    pub models: usize,
    pub timings: Option<StageTimings>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMeans {
    pub count: usize,
    pub acquisition_s: f64,
    pub upload_s: f64,
    pub pickup_s: f64,
    pub inference_s: f64,
    pub publish_s: f64,
    /// Mean of the per-trial totals.
    pub total_s: f64,
}

impl StageMeans {
    pub fn stage_sum(&self) -> f64 {
        self.acquisition_s + self.upload_s + self.pickup_s + self.inference_s + self.publish_s
    }
}

pub fn aggregate_trials(trials: &[StageTimings]) -> Result<StageMeans, BenchError> {
    if trials.is_empty() {
        return Err(BenchError::BadRequest("no trials to aggregate".into()));
    }
    let n = trials.len() as f64;
    let mean = |f: fn(&StageTimings) -> f64| trials.iter().map(f).sum::<f64>() / n;
    Ok(StageMeans {
        count: trials.len(),
        acquisition_s: mean(|t| t.acquisition_s),
        upload_s: mean(|t| t.upload_s),
        pickup_s: mean(|t| t.pickup_s),
        inference_s: mean(|t| t.inference_s),
        publish_s: mean(|t| t.publish_s),
        total_s: mean(|t| t.total_s),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub device: DeviceKind,
    pub mode: TrialMode,
    pub clock: ClockKind,
    pub poll_interval_s: f64,
    pub n: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub injected: Option<InjectedDelays>,
    pub means: Option<StageMeans>,
    pub trials: Vec<TrialRecord>,
    pub runtime_s: f64,
}

impl TimingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            TrialMode::Injected => "injected delays",
            TrialMode::Wall => "measured",
        };
        let clock = match self.clock {
            ClockKind::Simulated => "simulated clock",
            ClockKind::Real => "real clock",
        };
        let _ = writeln!(
            out,
            "## {} turnaround ({mode}, {clock}, poll every {} s)\n",
            self.device.label(),
            self.poll_interval_s
        );
        let _ = writeln!(out, "| {} |", TABLE_COLUMNS.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(TABLE_COLUMNS.len()));
        match &self.means {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                    self.device.label(),
                    m.acquisition_s,
                    m.upload_s,
                    m.pickup_s,
                    m.inference_s,
                    m.publish_s,
                    m.total_s
                );
            }
            None => {
                let _ = writeln!(out, "| {} | n/a | n/a | n/a | n/a | n/a | n/a |", self.device.label());
            }
        }
        let _ = writeln!(out, "\n{} trials, {} succeeded, {} failed. Means cover successful trials only.\n", self.n, self.succeeded, self.failed);
        let _ = writeln!(out, "| Trial | Upload (s) | Pickup (s) | Inference (s) | Publish (s) | Total (s) | Status |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for t in &self.trials {
            match (&t.timings, &t.error) {
                (Some(s), _) => {
                    let _ = writeln!(
                        out,
                        "| {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {} |",
                        t.trial + 1,
                        s.upload_s,
                        s.pickup_s,
                        s.inference_s,
                        s.publish_s,
                        s.total_s,
                        t.statuses.join(" > ")
                    );
                }
                (None, e) => {
                    let _ = writeln!(out, "| {} | | | | | | failed: {} |", t.trial + 1, e.as_deref().unwrap_or("unknown"));
                }
            }
        }
        out
    }
}

fn origin() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 14, 0, 0).unwrap()
}

fn ms(seconds: f64) -> Duration {
    Duration::milliseconds((seconds * 1000.0).round() as i64)
}

#[derive(Deserialize)]
struct ResultsBody {
    status: String,
    #[serde(default)]
    reason: Option<String>,
    timings: Option<StageTimings>,
    results: Vec<serde_json::Value>,
}

struct Rig {
    platform: Platform,
    api: BackgroundServer,
    vendor: Option<(Arc<VendorSim>, BackgroundServer)>,
    http: reqwest::blocking::Client,
    _dir: tempfile::TempDir,
}

impl Rig {
    fn results(&self, id: &str) -> Result<Option<ResultsBody>, String> {
        let resp = self
            .http
            .get(format!("{}/v1/results/{id}", self.api.url()))
            .send()
            .map_err(|e| e.to_string())?;
        if resp.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(None);
        }
        if !resp.status().is_success() {
            return Err(format!("results returned {}", resp.status()));
        }
        let bytes = resp.bytes().map_err(|e| e.to_string())?;
        serde_json::from_slice(&bytes).map(Some).map_err(|e| e.to_string())
    }
}

fn build_rig(opts: &TrialOptions, clock: Clock) -> Result<Rig, BenchError> {
    let setup = |e: &dyn std::fmt::Display| BenchError::Setup(e.to_string());
    let dir = tempfile::tempdir().map_err(|e| setup(&e))?;
    let mut config = PlatformConfig::default();
    config.lake.root = dir.path().join("lake");
    config.lake.sync = opts.clock == ClockKind::Real;
    config.pipeline.poll_interval_s = opts.poll_interval_s;
    config.pipeline.clock = opts.clock;
    config.pipeline.models = match &opts.models_file {
        Some(f) => Registry::descriptors_from_file(f).map_err(|e| setup(&e))?,
        None => write_fixture_models(&dir.path().join("models"), &opts.plan, opts.seed).map_err(|e| setup(&e))?,
    };
    if opts.mode == TrialMode::Injected {
        config.pipeline.injected_delays = opts.effective_delays();
    }
    let vendor = if opts.device == DeviceKind::AppleWatch {
        None
    } else {
        let sim = Arc::new(VendorSim::new(opts.device, clock.clone()));
        let server = BackgroundServer::start(sim.clone().router(), None).map_err(|e| setup(&e))?;
        config.feeds.push(FeedConfig { device: opts.device, url: server.url() });
        Some((sim, server))
    };
    let platform = Platform::build_with_clock(config, clock).map_err(|e| setup(&e))?;
    let api = BackgroundServer::start(platform.router(), None).map_err(|e| setup(&e))?;
    let http = reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(30))
        .build()
        .map_err(|e| setup(&e))?;
    Ok(Rig { platform, api, vendor, http, _dir: dir })
}

/// Puts a freshly acquired recording into the platform's reach. Returns its
/// recording id.
fn deliver(rig: &Rig, opts: &TrialOptions, trial: usize, spec: &SynthSpec, upload_s: f64) -> Result<String, String> {
    let clock = &rig.platform.clock;
    let external_id = format!("BENCH-{:03}", trial % 10);
    match &rig.vendor {
        None => {
            let fetched_at = clock.now();
            let bytes = spec.payload(opts.device, fetched_at - ms(ACQUISITION_S));
            if let Some(sim) = clock.sim() {
                sim.advance(upload_s);
            }
            post_recording(&rig.http, &rig.api.url(), opts.device, &external_id, Some(fetched_at), bytes)
                .map(|u| u.recording_id)
                .map_err(|e| e.to_string())
        }
        Some((sim, _)) => {
            let now = clock.now();
            let bytes = spec.payload(opts.device, now - ms(ACQUISITION_S));
            let id = RecordingId::of_bytes(&bytes).to_string();
            sim.push(now, &external_id, bytes);
            Ok(id)
        }
    }
}

fn status_of(body: &Option<ResultsBody>) -> String {
    body.as_ref().map_or_else(|| "absent".to_string(), |b| b.status.clone())
}

fn finish(record: &mut TrialRecord, body: ResultsBody) {
    record.models = body.results.len();
    match body.status.as_str() {
        "done" => match body.timings {
            Some(t) => record.timings = Some(t),
            None => record.error = Some("done without timings".into()),
        },
        other => record.error = Some(format!("{other}: {}", body.reason.unwrap_or_default())),
    }
}

pub fn run_time_trials(opts: &TrialOptions) -> Result<TimingReport, BenchError> {
    if opts.n == 0 {
        return Err(BenchError::BadRequest("n must be at least 1".into()));
    }
    if !(opts.poll_interval_s.is_finite() && opts.poll_interval_s > 0.0) {
        return Err(BenchError::BadRequest("poll interval must be positive".into()));
    }
    let started = Instant::now();
    let clock = match opts.clock {
        ClockKind::Simulated => Clock::simulated(origin()),
        ClockKind::Real => Clock::System,
    };
    let rig = build_rig(opts, clock.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let upload_s = opts.upload_s.unwrap_or_else(|| reference_upload_s(opts.device));
    let interval = opts.poll_interval_s;

    let shutdown = Shutdown::new();
    let poller = (opts.clock == ClockKind::Real).then(|| rig.platform.spawn_pipeline(shutdown.clone()));
    let t0 = clock.now();
    if opts.clock == ClockKind::Simulated {
        rig.platform.orchestrator.tick(None).map_err(|e| BenchError::Setup(e.to_string()))?;
    }

    let mut trials = Vec::with_capacity(opts.n);
    for trial in 0..opts.n {
        let offset = match opts.mode {
            TrialMode::Wall => rng.random_range(0.0..interval),
            TrialMode::Injected => interval / 2.0,
        };
        let offset = (offset * 1000.0).round() / 1000.0;
        let spec = SynthSpec::seeded(opts.seed.wrapping_mul(7919).wrapping_add(trial as u64));
        let mut record = TrialRecord {
            trial,
            arrival_offset_s: offset,
            recording_id: None,
            statuses: Vec::new(),
            polls: 0,
            models: 0,
            timings: None,
            error: None,
        };
        match opts.clock {
            ClockKind::Simulated => {
                let sim = clock.sim().expect("simulated clock");
                // every trial gets its own pair of grid intervals
                let k = (2 * trial + 1) as f64;
                let arrival = t0 + ms(k * interval + offset);
                let upload = if rig.vendor.is_none() { upload_s } else { 0.0 };
                sim.set(arrival - ms(upload));
                match deliver(&rig, opts, trial, &spec, upload) {
                    Err(e) => record.error = Some(e),
                    Ok(id) => {
                        record.recording_id = Some(id.clone());
                        record.statuses.push(status_of(&rig.results(&id).unwrap_or(None)));
                        let mut next = ((k * interval + offset) / interval).ceil();
                        loop {
                            if record.polls == opts.max_ticks {
                                record.error = Some(format!("no result after {} polls", opts.max_ticks));
                                break;
                            }
                            sim.set(t0 + ms(next * interval));
                            next += 1.0;
                            record.polls += 1;
                            if let Err(e) = rig.platform.orchestrator.tick(None) {
                                tracing::warn!(error = %e, "tick failed");
                            }
                            match rig.results(&id) {
                                Err(e) => {
                                    record.error = Some(e);
                                    break;
                                }
                                Ok(body) => {
                                    record.statuses.push(status_of(&body));
                                    if let Some(b) = body.filter(|b| b.status != "pending") {
                                        finish(&mut record, b);
                                        break;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ClockKind::Real => {
                if opts.mode == TrialMode::Wall {
                    std::thread::sleep(std::time::Duration::from_secs_f64(offset));
                }
                match deliver(&rig, opts, trial, &spec, 0.0) {
                    Err(e) => record.error = Some(e),
                    Ok(id) => {
                        record.recording_id = Some(id.clone());
                        let deadline = Instant::now() + std::time::Duration::from_secs_f64(interval * opts.max_ticks as f64 + 5.0);
                        loop {
                            let body = rig.results(&id).unwrap_or(None);
                            let s = status_of(&body);
                            if record.statuses.last() != Some(&s) {
                                record.statuses.push(s);
                            }
                            if let Some(b) = body.filter(|b| b.status != "pending") {
                                finish(&mut record, b);
                                break;
                            }
                            if Instant::now() > deadline {
                                record.error = Some("timed out waiting for a result".into());
                                break;
                            }
                            std::thread::sleep(std::time::Duration::from_millis(200));
                        }
                        record.polls = rig.platform.status().snapshot().ticks as usize;
                    }
                }
            }
        }
        trials.push(record);
    }
    shutdown.request();
    if let Some(p) = poller {
        let _ = p.join();
    }

    let ok: Vec<StageTimings> = trials.iter().filter_map(|t| t.timings).collect();
    let means = aggregate_trials(&ok).ok();
    Ok(TimingReport {
        device: opts.device,
        mode: opts.mode,
        clock: opts.clock,
        poll_interval_s: interval,
        n: opts.n,
        succeeded: ok.len(),
        failed: opts.n - ok.len(),
        injected: (opts.mode == TrialMode::Injected).then(|| opts.effective_delays()),
        means,
        trials,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
