//! HTTP front door: ingest of device payloads plus the read API the
//! dashboard polls. [`Platform`] wires lake, ingestor and orchestrator
//! together from one [`PlatformConfig`]; `ecgd` and the bench both use it.
//!
//! JSON response schemas live in `schemas/` next to this crate.

pub mod config;
mod routes;
pub mod views;

use std::sync::Arc;
use std::thread::JoinHandle;

use axum::Router;
use chrono::Utc;
use ecg_lake::{Lake, LakeError, LakeOptions};
use ecg_pipeline::{Clock, ClockKind, Ingestor, Orchestrator, PipelineError, PipelineStatus, Shutdown, VendorFeed};
use thiserror::Error;

pub use config::{ApiConfig, FeedConfig, LakeConfig, PlatformConfig};
pub use routes::{router, AppState, MAX_BODY_BYTES};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Lake(#[from] LakeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub struct Platform {
    pub lake: Arc<Lake>,
    pub ingestor: Ingestor,
    pub orchestrator: Arc<Orchestrator>,
    pub clock: Clock,
    config: PlatformConfig,
}

impl Platform {
    /// Clock comes from `pipeline.clock`; a simulated clock starts at now.
    pub fn build(config: PlatformConfig) -> Result<Self, PlatformError> {
        let clock = match config.pipeline.clock {
            ClockKind::Real => Clock::System,
            ClockKind::Simulated => Clock::simulated(Utc::now()),
        };
        Self::build_with_clock(config, clock)
    }

    pub fn build_with_clock(mut config: PlatformConfig, clock: Clock) -> Result<Self, PlatformError> {
        let lake = Arc::new(Lake::open_with(&config.lake.root, LakeOptions { sync: config.lake.sync })?);
        config.pipeline.dsp = config.dsp.clone();
        if config.pipeline.state_dir.is_none() {
            config.pipeline.state_dir = Some(config.lake.root.clone());
        }
        let registry = Arc::new(config.pipeline.load_registry()?);
        for e in registry.entries() {
            if let Err(err) = &e.model {
                tracing::warn!(model = %e.descriptor.model_id, error = %err, "model failed to load");
            }
        }
        let ingestor = Ingestor::new(lake.clone(), config.adapters.clone(), clock.clone());
        let feeds = config.feeds.iter().map(|f| VendorFeed::new(f.device, f.url.clone())).collect();
        let orchestrator = Orchestrator::new(lake.clone(), registry, config.pipeline.clone(), clock.clone())?
            .with_feeds(ingestor.clone(), feeds);
        Ok(Platform { lake, ingestor, orchestrator: Arc::new(orchestrator), clock, config })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn status(&self) -> Arc<PipelineStatus> {
        self.orchestrator.status()
    }

    pub fn state(&self) -> AppState {
        AppState {
            lake: self.lake.clone(),
            ingestor: self.ingestor.clone(),
            status: self.status(),
            clock: self.clock.clone(),
            poll_interval_s: self.config.pipeline.poll_interval_s,
        }
    }

    pub fn router(&self) -> Router {
        router(self.state())
    }

    /// Runs the poll loop on its own thread until `shutdown`.
    pub fn spawn_pipeline(&self, shutdown: Arc<Shutdown>) -> JoinHandle<()> {
        let orch = self.orchestrator.clone();
        std::thread::Builder::new()
            .name("pipeline".into())
            .spawn(move || orch.run_loop(&shutdown))
            .expect("spawn pipeline thread")
    }
}
