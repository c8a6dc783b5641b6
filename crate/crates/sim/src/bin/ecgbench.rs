use std::path::PathBuf;

use anyhow::bail;
use clap::{Parser, Subcommand, ValueEnum};
use ecg_core::DeviceKind;
use ecg_pipeline::{ClockKind, InjectedDelays};
use ecg_sim::models::small_plan;
use ecg_sim::{run_time_trials, TrialMode, TrialOptions};

/// Turnaround trials against an in-process platform.
#[derive(Parser)]
#[command(name = "ecgbench", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Device {
    Kardia,
    Watch,
    Fitbit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Injected,
    Wall,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Sim,
    Real,
}

#[derive(Subcommand)]
enum Cmd {
    Trials {
        #[arg(long, value_enum)]
        device: Device,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, value_enum, default_value = "injected")]
        mode: Mode,
        /// Write the report here; `.json` gives JSON, anything else Markdown.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        poll_interval: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// models.toml to score with instead of generated fixtures.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Generate narrow fixture networks.
        #[arg(long)]
        small_models: bool,
        #[arg(long, value_enum, default_value = "sim")]
        clock: ClockArg,
        #[arg(long)]
        pickup: Option<f64>,
        #[arg(long)]
        inference: Option<f64>,
        #[arg(long)]
        publish: Option<f64>,
        #[arg(long)]
        upload: Option<f64>,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter("warn").init();
    let Cmd::Trials { device, n, mode, report, poll_interval, seed, models, small_models, clock, pickup, inference, publish, upload } =
        Cli::parse().cmd;
    let device = match device {
        Device::Kardia => DeviceKind::Kardia,
        Device::Watch => DeviceKind::AppleWatch,
        Device::Fitbit => DeviceKind::Fitbit,
    };
    let mode = match mode {
        Mode::Injected => TrialMode::Injected,
        Mode::Wall => TrialMode::Wall,
    };
    let mut opts = TrialOptions::new(device, n, mode);
    opts.poll_interval_s = poll_interval;
    opts.seed = seed;
    opts.models_file = models;
    if small_models {
        opts.plan = small_plan();
    }
    opts.clock = match clock {
        ClockArg::Sim => ClockKind::Simulated,
        ClockArg::Real => ClockKind::Real,
    };
    opts.delays = InjectedDelays { pickup_s: pickup, inference_s: inference, publish_s: publish };
    opts.upload_s = upload;

    let r = run_time_trials(&opts)?;
    let md = r.to_markdown();
    print!("{md}");
    if let Some(path) = report {
        let body = if path.extension().is_some_and(|e| e == "json") { r.to_json() } else { md };
        std::fs::write(&path, body)?;
    }
    if r.succeeded == 0 {
        bail!("every trial failed");
    }
    Ok(())
}
