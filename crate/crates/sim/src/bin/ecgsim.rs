use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::{Duration, Utc};
use clap::{Args, Parser, Subcommand};
use ecg_core::inference::fixture::CnnPlan;
use ecg_core::{timefmt, DeviceKind};
use ecg_pipeline::Clock;
use ecg_sim::models::{small_plan, write_fixture_models};
use ecg_sim::{emit_watch_export, post_recording, write_to_inbox, BackgroundServer, Schedule, SynthSpec, VendorSim};

/// Device and vendor API simulators.
#[derive(Parser)]
#[command(name = "ecgsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve a Kardia-style record API.
    Kardia(FeedArgs),
    /// Serve a Fitbit-style record API.
    Fitbit(FeedArgs),
    /// Emit one watch export into a directory or POST it to the API.
    Watch(WatchArgs),
    /// Write one device payload to a file.
    Sample {
        #[arg(long)]
        device: DeviceKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// RFC 3339 UTC acquisition start.
        #[arg(long)]
        recorded_at: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the fixture model weights and registry.
    Weights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Narrow networks for quick runs.
        #[arg(long)]
        small: bool,
    },
}

#[derive(Args)]
struct FeedArgs {
    #[arg(long, default_value_t = 9100)]
    port: u16,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// TOML schedule; without one, `--count` records are emitted every `--every` seconds.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 60.0)]
    every: f64,
}

#[derive(Args)]
struct WatchArgs {
    #[arg(long, conflicts_with = "post")]
    out: Option<PathBuf>,
    /// API base URL, e.g. http://127.0.0.1:8080
    #[arg(long)]
    post: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "WATCH-0001")]
    external_id: String,
    /// Constant trace (the pipeline will reject it).
    #[arg(long)]
    flat: bool,
}

fn serve_feed(device: DeviceKind, a: FeedArgs) -> anyhow::Result<()> {
    let schedule = match &a.schedule {
        Some(p) => Schedule::load(p)?,
        None => Schedule::periodic(a.count, 5.0, a.every, a.seed),
    };
    let origin = Utc::now();
    let sim = Arc::new(VendorSim::with_schedule(device, Clock::System, origin, &schedule));
    let server = BackgroundServer::start(sim.clone().router(), Some(SocketAddr::from(([127, 0, 0, 1], a.port))))
        .with_context(|| format!("binding port {}", a.port))?;
    println!("{} feed with {} records at {}/records (origin {})", device.label(), sim.len(), server.url(), timefmt::format(&origin));
    loop {
        std::thread::park();
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match Cli::parse().cmd {
        Cmd::Kardia(a) => serve_feed(DeviceKind::Kardia, a),
        Cmd::Fitbit(a) => serve_feed(DeviceKind::Fitbit, a),
        Cmd::Watch(w) => {
            let spec = SynthSpec { flat: w.flat, ..SynthSpec::seeded(w.seed) };
            let now = Utc::now();
            let bytes = emit_watch_export(&spec, now - Duration::seconds(30))?;
            match (w.out, w.post) {
                (Some(dir), None) => println!("{}", write_to_inbox(&dir, &bytes)?.display()),
                (None, Some(url)) => {
                    let client = reqwest::blocking::Client::new();
                    let up = post_recording(&client, &url, DeviceKind::AppleWatch, &w.external_id, Some(now), bytes)?;
                    println!("{} study {}{}", up.recording_id, up.study_id, if up.duplicate { " (duplicate)" } else { "" });
                }
                _ => bail!("give exactly one of --out or --post"),
            }
            Ok(())
        }
        Cmd::Sample { device, seed, recorded_at, out } => {
            let at = timefmt::parse(&recorded_at).map_err(|e| anyhow::anyhow!("--recorded-at: {e}"))?;
            std::fs::write(&out, SynthSpec::seeded(seed).payload(device, at))
                .with_context(|| format!("writing {}", out.display()))?;
            println!("{}", out.display());
            Ok(())
        }
        Cmd::Weights { out, seed, small } => {
            let plan = if small { small_plan() } else { CnnPlan::default() };
            for d in write_fixture_models(&out, &plan, seed)? {
                println!("{} {} {}", d.model_id, d.kind, d.weight_file.display());
            }
            Ok(())
        }
    }
}
