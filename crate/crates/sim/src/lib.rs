//! Stand-ins for the device ecosystems and the turnaround trial harness.
//!
//! * [`synth`]: seeded synthetic traces and device payloads.
//! * [`vendor`]: Kardia / Fitbit style query APIs over a schedule.
//! * [`watch`]: watch export emitter (inbox file or HTTP upload).
//! * [`bench`]: n-trial stage timing runs and their reports.
//! * [`models`]: fixture model weights and registry.

pub mod bench;
pub mod models;
pub mod server;
pub mod synth;
pub mod vendor;
pub mod watch;

pub use bench::{aggregate_trials, run_time_trials, BenchError, StageMeans, TimingReport, TrialMode, TrialOptions, TrialRecord};
pub use server::BackgroundServer;
pub use synth::SynthSpec;
pub use vendor::{Schedule, ScheduledRecord, VendorSim};
pub use watch::{emit_watch_export, post_recording, write_to_inbox};
