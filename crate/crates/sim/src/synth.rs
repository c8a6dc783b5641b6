//! Seeded synthetic Lead I traces: a sinusoid at the heart rate, Gaussian
//! noise and slow baseline wander, in integer microvolts. Not physiological.

use chrono::{DateTime, Utc};
use ecg_core::adapters::{write_vendor_record, write_watch_export};
use ecg_core::{DeviceKind, ACQUISITION_S};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_s: f64,
    /// 0 picks the device's native rate.
    pub rate_hz: u32,
    pub heart_rate_bpm: f64,
    pub amplitude_uv: f64,
    pub noise_uv: f64,
    pub wander_uv: f64,
    pub wander_hz: f64,
    /// Constant trace; the pipeline rejects these.
    pub flat: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            duration_s: ACQUISITION_S,
            rate_hz: 0,
            heart_rate_bpm: 72.0,
            amplitude_uv: 1000.0,
            noise_uv: 30.0,
            wander_uv: 150.0,
            wander_hz: 0.25,
            flat: false,
        }
    }
}

pub fn native_rate(device: DeviceKind) -> u32 {
    match device {
        DeviceKind::AppleWatch => 500,
        DeviceKind::Kardia => 100,
        DeviceKind::Fitbit => 250,
    }
}

impl SynthSpec {
    pub fn seeded(seed: u64) -> Self {
        SynthSpec { seed, ..Self::default() }
    }

    pub fn rate_for(&self, device: DeviceKind) -> u32 {
        if self.rate_hz == 0 { native_rate(device) } else { self.rate_hz }
    }

    pub fn samples(&self, rate_hz: u32) -> Vec<i64> {
        let n = (self.duration_s * rate_hz as f64).round() as usize;
        if self.flat {
            return vec![0; n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let wander_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let noise = Normal::new(0.0, self.noise_uv.max(0.0)).expect("finite noise level");
        let f = self.heart_rate_bpm / 60.0;
        (0..n)
            .map(|i| {
                let t = i as f64 / rate_hz as f64;
                let beat = self.amplitude_uv * (std::f64::consts::TAU * f * t + phase).sin();
                let wander = self.wander_uv * (std::f64::consts::TAU * self.wander_hz * t + wander_phase).sin();
                (beat + wander + noise.sample(&mut rng)).round() as i64
            })
            .collect()
    }

    /// Device wire payload: watch XML export or vendor JSON record.
    pub fn payload(&self, device: DeviceKind, recorded_at: DateTime<Utc>) -> Vec<u8> {
        let rate = self.rate_for(device);
        let uv = self.samples(rate);
        match device {
            DeviceKind::AppleWatch => write_watch_export(rate, recorded_at, &uv),
            _ => write_vendor_record(device, rate, recorded_at, &uv),
        }
    }
}
