use std::path::PathBuf;

use ecg_core::{DspConfig, ModelDescriptor, ModelError, Registry};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Real,
    Simulated,
}

/// Fixed stage durations that replace the measured ones (bench mode).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectedDelays {
    pub pickup_s: Option<f64>,
    pub inference_s: Option<f64>,
    pub publish_s: Option<f64>,
}

impl InjectedDelays {
    pub fn is_empty(&self) -> bool {
        self.pickup_s.is_none() && self.inference_s.is_none() && self.publish_s.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub poll_interval_s: f64,
    pub workers: usize,
    /// Inline model registry.
    pub models: Vec<ModelDescriptor>,
    /// Registry file (`[[models]]` TOML); entries are appended to `models`.
    pub models_file: Option<PathBuf>,
    pub clock: ClockKind,
    pub injected_delays: InjectedDelays,
    /// Where the cursor checkpoint lives; defaults to the lake root.
    pub state_dir: Option<PathBuf>,
    /// Filled from the top-level `dsp` section.
    #[serde(skip)]
    pub dsp: DspConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            poll_interval_s: 30.0,
            workers: 2,
            models: Vec::new(),
            models_file: None,
            clock: ClockKind::Real,
            injected_delays: InjectedDelays::default(),
            state_dir: None,
            dsp: DspConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.poll_interval_s.is_finite() && self.poll_interval_s > 0.0) {
            return Err(PipelineError::Config(format!("poll_interval_s must be > 0, got {}", self.poll_interval_s)));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        let d = &self.injected_delays;
        for (name, v) in [("pickup_s", d.pickup_s), ("inference_s", d.inference_s), ("publish_s", d.publish_s)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(PipelineError::Config(format!("injected {name} must be a non-negative number")));
                }
            }
        }
        if !(self.dsp.baseline_window_s.is_finite() && self.dsp.baseline_window_s > 0.0) {
            return Err(PipelineError::Config("dsp.baseline_window_s must be > 0".into()));
        }
        Ok(())
    }

    /// Every descriptor from `models` and `models_file`.
    pub fn descriptors(&self) -> Result<Vec<ModelDescriptor>, ModelError> {
        let mut all = self.models.clone();
        if let Some(path) = &self.models_file {
            all.extend(Registry::descriptors_from_file(path)?);
        }
        Ok(all)
    }

    pub fn load_registry(&self) -> Result<Registry, PipelineError> {
        let descriptors = self.descriptors().map_err(|e| PipelineError::Config(e.to_string()))?;
        if descriptors.is_empty() {
            return Err(PipelineError::Config("model registry is empty".into()));
        }
        Ok(Registry::load(&descriptors))
    }
}
