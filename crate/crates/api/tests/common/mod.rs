#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use ecg_api::{Platform, PlatformConfig};
use ecg_core::adapters::{write_vendor_record, write_watch_export};
use ecg_core::inference::fixture::{random_cnn, random_ensemble, CnnPlan};
use ecg_core::inference::weights;
use ecg_core::{DeviceKind, ModelDescriptor, ModelKind};
use ecg_pipeline::Clock;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 14, 0, 0).unwrap()
}

pub fn small_plan() -> CnnPlan {
    CnnPlan { channels: vec![4; 7], kernels: vec![3; 7], dense: vec![8, 4], ..CnnPlan::default() }
}

/// lvsd and structural as plain CNNs, hcm as CNN + tree ensemble.
pub fn write_models(dir: &Path) -> Vec<ModelDescriptor> {
    let mut out = Vec::new();
    for (i, id) in ["hcm", "lvsd", "structural"].into_iter().enumerate() {
        let path = dir.join(format!("{id}.ecgw"));
        let cnn = random_cnn::<f64>(id, &small_plan(), 500 + i as u64);
        let (kind, bytes) = if id == "hcm" {
            let ens = random_ensemble::<f64>(id, 4, 5, 3, 900);
            (ModelKind::CnnEnsemble, weights::encode(&cnn, Some(&ens)))
        } else {
            (ModelKind::Cnn, weights::encode(&cnn, None))
        };
        std::fs::write(&path, bytes).unwrap();
        out.push(ModelDescriptor { model_id: id.into(), kind, weight_file: path, threshold: 0.5 });
    }
    out
}

fn wave(n: usize, rate: f64, seed: u64) -> Vec<i64> {
    let f = 1.0 + (seed % 7) as f64 * 0.1;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let noise = ((i as u64 * 2654435761 + seed * 97) % 101) as f64 - 50.0;
            (900.0 * (std::f64::consts::TAU * f * t).sin() + noise).round() as i64
        })
        .collect()
}

pub fn kardia(seed: u64) -> Vec<u8> {
    kardia_at(seed, t0())
}

pub fn kardia_at(seed: u64, recorded_at: DateTime<Utc>) -> Vec<u8> {
    write_vendor_record(DeviceKind::Kardia, 100, recorded_at, &wave(3000, 100.0, seed))
}

pub fn watch(seed: u64) -> Vec<u8> {
    write_watch_export(500, t0() + Duration::minutes(seed as i64), &wave(15000, 500.0, seed))
}

pub fn flat_kardia() -> Vec<u8> {
    write_vendor_record(DeviceKind::Kardia, 100, t0(), &[0; 3000])
}

pub struct Harness {
    pub dir: TempDir,
    pub platform: Platform,
    pub app: Router,
}

impl Harness {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let models = dir.path().join("models");
        std::fs::create_dir_all(&models).unwrap();
        let mut config = PlatformConfig::default();
        config.lake.root = dir.path().join("lake");
        config.lake.sync = false;
        config.pipeline.models = write_models(&models);
        let platform = Platform::build_with_clock(config, Clock::simulated(t0())).unwrap();
        let app = platform.router();
        Harness { dir, platform, app }
    }

    pub fn tick(&self) {
        self.platform.orchestrator.tick(None).unwrap();
    }

    pub fn advance(&self, seconds: f64) {
        self.platform.clock.sim().unwrap().advance(seconds);
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Value, axum::http::HeaderMap) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {:?}", String::from_utf8_lossy(&bytes)));
        (status, body, headers)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, v, _) = self.send(Request::get(uri).body(Body::empty()).unwrap()).await;
        (s, v)
    }

    pub async fn post(&self, device: &str, external_id: &str, body: Vec<u8>) -> (StatusCode, Value) {
        let req = Request::post("/v1/recordings")
            .header("X-Device-Kind", device)
            .header("X-External-Id", external_id)
            .body(Body::from(body))
            .unwrap();
        let (s, v, _) = self.send(req).await;
        (s, v)
    }
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.json"));
    let schema: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[track_caller]
pub fn assert_valid(name: &str, v: &Value) {
    let errors: Vec<String> = schema(name).iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:?}\n{v:#}");
}
