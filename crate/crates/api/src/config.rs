//! `ecgd` TOML configuration.
//!
//! ```toml
//! [api]
//! listen = "127.0.0.1:8080"
//!
//! [lake]
//! root = "lake"
//!
//! [dsp]
//! baseline_window_s = 0.6
//! window_policy = "central"
//!
//! [pipeline]
//! poll_interval_s = 30
//! models_file = "models.toml"
//!
//! [[feeds]]
//! device = "kardia"
//! url = "http://127.0.0.1:9100"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use ecg_core::{AdapterConfig, DeviceKind, DspConfig};
use ecg_pipeline::PipelineConfig;
use serde::Deserialize;

use crate::PlatformError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub listen: String,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig { listen: "127.0.0.1:8080".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LakeConfig {
    pub root: PathBuf,
    /// fsync every write. Only benches turn this off.
    pub sync: bool,
}

impl Default for LakeConfig {
    fn default() -> Self {
        LakeConfig { root: PathBuf::from("lake"), sync: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub device: DeviceKind,
    pub url: String,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    pub api: ApiConfig,
    pub lake: LakeConfig,
    pub dsp: DspConfig,
    pub adapters: AdapterConfig,
    pub pipeline: PipelineConfig,
    pub feeds: Vec<FeedConfig>,
}

impl PlatformConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PlatformError> {
        let mut cfg: PlatformConfig = toml::from_str(text).map_err(|e| PlatformError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PlatformError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlatformError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.lake.root);
        if let Some(p) = self.pipeline.models_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.pipeline.state_dir.as_mut() {
            fix(p);
        }
        for m in &mut self.pipeline.models {
            fix(&mut m.weight_file);
        }
    }
}
