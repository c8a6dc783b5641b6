//! Preprocessing chain: baseline removal, resampling to the model rate,
//! window extraction and z-scoring.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EcgRecording, NormalizedWindow, RecordingId};
use crate::scalar::Scalar;
use crate::{MODEL_RATE_HZ, WINDOW_LEN};

/// Windows whose standard deviation falls below this are lead-off traces.
pub const FLAT_STD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("median window {window} must be odd and no longer than the signal ({len})")]
    BadWindow { window: usize, len: usize },
    #[error("flat signal (standard deviation {std:e})")]
    FlatSignal { std: f64 },
    #[error("sample rate must be positive")]
    BadRate,
}

impl DspError {
    pub fn code(&self) -> &'static str {
        match self {
            DspError::TooShort { .. } => "TooShort",
            DspError::BadWindow { .. } => "BadWindow",
            DspError::FlatSignal { .. } => "FlatSignal",
            DspError::BadRate => "BadRate",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("recording {recording_id} rejected: {source}")]
pub struct PreprocessError {
    pub recording_id: RecordingId,
    #[source]
    pub source: DspError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    #[default]
    Central,
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub baseline_window_s: f64,
    pub window_policy: WindowPolicy,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig { baseline_window_s: 0.6, window_policy: WindowPolicy::Central }
    }
}

/// Odd sample count nearest to `seconds * rate_hz`; ties round up.
pub fn baseline_window_samples(seconds: f64, rate_hz: u32) -> usize {
    // snap away representation noise so 0.6 * 100 ties exactly between 59 and 61
    let target = (seconds * rate_hz as f64 * 1e6).round() / 1e6;
    let m = ((target - 1.0) / 2.0 + 0.5).floor().max(0.0) as usize;
    2 * m + 1
}

/// Linear interpolation from `src_hz` to `dst_hz`.
///
/// Output sample `k` sits at input position `k * src_hz / dst_hz`; positions
/// past the last sample clamp to it. Positions are computed in exact integer
/// arithmetic.
pub fn resample_linear<T: Scalar>(samples: &[T], src_hz: u32, dst_hz: u32) -> Result<Vec<T>, DspError> {
    if src_hz == 0 || dst_hz == 0 {
        return Err(DspError::BadRate);
    }
    let n = samples.len();
    if n < 2 {
        return Err(DspError::TooShort { len: n, needed: 2 });
    }
    if src_hz == dst_hz {
        return Ok(samples.to_vec());
    }
    let (src, dst) = (src_hz as u128, dst_hz as u128);
    // round(n * dst / src), halves rounding up
    let n_out = ((2 * n as u128 * dst + src) / (2 * src)) as usize;
    let dst_t = T::of(dst_hz as f64);
    let last = samples[n - 1];
    let out = (0..n_out as u128)
        .map(|k| {
            let num = k * src;
            let i = (num / dst) as usize;
            if i >= n - 1 {
                return last;
            }
            let (a, b) = (samples[i], samples[i + 1]);
            let frac = T::of((num % dst) as f64) / dst_t;
            let v = a + (b - a) * frac;
            v.max(a.min(b)).min(a.max(b))
        })
        .collect();
    Ok(out)
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Subtracts a running median. The window is centered and truncated at the
/// edges, so edge medians come from fewer samples (even counts average the
/// two middle values).
pub fn remove_baseline<T: Scalar>(samples: &[T], window_samples: usize) -> Result<Vec<T>, DspError> {
    let n = samples.len();
    if window_samples == 0 || window_samples.is_multiple_of(2) || window_samples > n {
        return Err(DspError::BadWindow { window: window_samples, len: n });
    }
    let half = window_samples / 2;
    let two = T::one() + T::one();

    let mut sorted: Vec<T> = samples[..(half + 1).min(n)].to_vec();
    sorted.sort_by(cmp);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            if let Some(&incoming) = samples.get(i + half) {
                let pos = sorted.partition_point(|v| cmp(v, &incoming) == Ordering::Less);
                sorted.insert(pos, incoming);
            }
            if i > half {
                let outgoing = samples[i - half - 1];
                let pos = sorted.partition_point(|v| cmp(v, &outgoing) == Ordering::Less);
                sorted.remove(pos);
            }
        }
        let m = sorted.len();
        let median = if m % 2 == 1 { sorted[m / 2] } else { (sorted[m / 2 - 1] + sorted[m / 2]) / two };
        out.push(samples[i] - median);
    }
    Ok(out)
}

/// Cuts a [`WINDOW_LEN`]-sample window from a 500 Hz signal.
/// Returns the window and its start offset in seconds.
pub fn extract_window<T: Scalar>(samples: &[T], policy: WindowPolicy) -> Result<(Vec<T>, f64), DspError> {
    let n = samples.len();
    if n < WINDOW_LEN {
        return Err(DspError::TooShort { len: n, needed: WINDOW_LEN });
    }
    let start = match policy {
        WindowPolicy::Central => (n - WINDOW_LEN) / 2,
        WindowPolicy::First => 0,
    };
    Ok((samples[start..start + WINDOW_LEN].to_vec(), start as f64 / MODEL_RATE_HZ as f64))
}

/// Z-scores values with the population standard deviation.
pub fn zscore<T: Scalar>(values: &[T]) -> Result<Vec<T>, DspError> {
    if values.is_empty() {
        return Err(DspError::TooShort { len: 0, needed: 1 });
    }
    let n = T::of(values.len() as f64);
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let var = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
    let std = var.sqrt();
    let sd = std.as_f64();
    if sd.is_nan() || sd < FLAT_STD {
        return Err(DspError::FlatSignal { std: sd });
    }
    Ok(values.iter().map(|&v| (v - mean) / std).collect())
}

pub fn standardize<T: Scalar>(
    window: &[T],
    source_recording_id: RecordingId,
    window_start_s: f64,
) -> Result<NormalizedWindow<T>, DspError> {
    if window.len() != WINDOW_LEN {
        return Err(DspError::TooShort { len: window.len(), needed: WINDOW_LEN });
    }
    let values = zscore(window)?;
    Ok(NormalizedWindow::new(values, source_recording_id, window_start_s).expect("length checked above"))
}

/// Full chain: baseline removal at the native rate, resampling to 500 Hz,
/// window extraction, standardization.
pub fn preprocess<T: Scalar>(recording: &EcgRecording, config: &DspConfig) -> Result<NormalizedWindow<T>, PreprocessError> {
    let fail = |source| PreprocessError { recording_id: recording.recording_id.clone(), source };
    let raw: Vec<T> = recording.samples.iter().map(|&v| T::of(v)).collect();
    let window = baseline_window_samples(config.baseline_window_s, recording.sample_rate_hz);
    let cleaned = remove_baseline(&raw, window).map_err(fail)?;
    let at_model_rate = resample_linear(&cleaned, recording.sample_rate_hz, MODEL_RATE_HZ).map_err(fail)?;
    let (cut, start_s) = extract_window(&at_model_rate, config.window_policy).map_err(fail)?;
    standardize(&cut, recording.recording_id.clone(), start_s).map_err(fail)
}
