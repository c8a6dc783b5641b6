#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use ecg_core::adapters::write_vendor_record;
use ecg_core::inference::fixture::{random_cnn, CnnPlan};
use ecg_core::inference::weights;
use ecg_core::{DeviceKind, ModelDescriptor, ModelKind, Registry};
use ecg_lake::{Lake, LakeOptions};
use ecg_pipeline::{Clock, IngestReceipt, IngestRequest, Ingestor, Orchestrator, PipelineConfig, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

pub fn at(seconds: f64) -> DateTime<Utc> {
    t0() + Duration::milliseconds((seconds * 1000.0).round() as i64)
}

/// Narrow network so tests stay fast; same depth and input length as the real one.
pub fn small_plan() -> CnnPlan {
    CnnPlan { channels: vec![4; 7], kernels: vec![3; 7], dense: vec![8, 4], ..CnnPlan::default() }
}

pub fn write_models(dir: &Path, ids: &[&str]) -> Vec<ModelDescriptor> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let path = dir.join(format!("{id}.ecgw"));
            let m = random_cnn::<f64>(id, &small_plan(), 100 + i as u64);
            std::fs::write(&path, weights::encode(&m, None)).unwrap();
            ModelDescriptor { model_id: id.to_string(), kind: ModelKind::Cnn, weight_file: path, threshold: 0.5 }
        })
        .collect()
}

/// 30 s Kardia record: sine plus noise, distinct per seed.
pub fn kardia_payload(seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = rng.random_range(0.8..2.0);
    let uv: Vec<i64> = (0..3000)
        .map(|i| {
            let t = i as f64 / 100.0;
            (800.0 * (std::f64::consts::TAU * f * t).sin() + rng.random_range(-60.0..60.0)).round() as i64
        })
        .collect();
    write_vendor_record(DeviceKind::Kardia, 100, t0(), &uv)
}

pub fn flat_payload() -> Vec<u8> {
    write_vendor_record(DeviceKind::Kardia, 100, t0(), &[250; 3000])
}

pub struct Rig {
    pub dir: TempDir,
    pub lake: Arc<Lake>,
    pub clock: Clock,
    pub ingestor: Ingestor,
    pub registry: Arc<Registry>,
    pub config: PipelineConfig,
}

impl Rig {
    pub fn new() -> Self {
        Self::with_models(&["hcm", "lvsd"])
    }

    pub fn with_models(ids: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let lake = Arc::new(Lake::open_with(dir.path().join("lake"), LakeOptions { sync: false }).unwrap());
        let models = dir.path().join("models");
        std::fs::create_dir_all(&models).unwrap();
        let descriptors = write_models(&models, ids);
        let registry = Arc::new(Registry::load(&descriptors));
        let clock = Clock::simulated(t0());
        let ingestor = Ingestor::new(lake.clone(), Default::default(), clock.clone());
        let config = PipelineConfig {
            models: descriptors,
            state_dir: Some(dir.path().join("state")),
            ..PipelineConfig::default()
        };
        std::fs::create_dir_all(dir.path().join("state")).unwrap();
        Rig { dir, lake, clock, ingestor, registry, config }
    }

    pub fn set(&self, seconds: f64) {
        self.clock.sim().unwrap().set(at(seconds));
    }

    pub fn ingest(&self, bytes: Vec<u8>, external_id: &str) -> IngestReceipt {
        self.ingestor
            .ingest(IngestRequest {
                bytes,
                declared: Some(DeviceKind::Kardia),
                external_id: external_id.into(),
                source_uri: "test://upload".into(),
                fetched_at: None,
                available_at: None,
            })
            .unwrap()
    }

    pub fn orchestrator(&self) -> Orchestrator {
        self.orchestrator_over(self.lake.clone())
    }

    pub fn orchestrator_over(&self, store: Arc<dyn Store>) -> Orchestrator {
        Orchestrator::new(store, self.registry.clone(), self.config.clone(), self.clock.clone()).unwrap()
    }
}
