//! Model loading and execution.

pub mod cnn;
pub mod ensemble;
pub mod fixture;
pub mod weights;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NormalizedWindow;
use crate::scalar::Scalar;

pub use cnn::{cnn_forward, forward_values, CnnModel, CnnOutput};
pub use ensemble::{ensemble_forward, Tree, TreeEnsemble, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("weight file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error("ModelShapeError({layer}): {detail}")]
    Shape { layer: String, detail: String },
    #[error("non-finite value after {layer}")]
    Numeric { layer: String },
    #[error("bad model descriptor: {0}")]
    Descriptor(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::NotFound(_) => "NotFound",
            ModelError::Io { .. } => "IoError",
            ModelError::Format(_) => "FormatError",
            ModelError::Shape { .. } => "ModelShapeError",
            ModelError::Numeric { .. } => "NumericError",
            ModelError::Descriptor(_) => "DescriptorError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "cnn+ensemble")]
    CnnEnsemble,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn => "cnn",
            ModelKind::CnnEnsemble => "cnn+ensemble",
        })
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// Registry entry for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub kind: ModelKind,
    pub weight_file: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl ModelDescriptor {
    /// Resolves a relative weight path against `base`.
    pub fn resolved(mut self, base: &Path) -> Self {
        if self.weight_file.is_relative() {
            self.weight_file = base.join(&self.weight_file);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel<T> {
    Cnn(CnnModel<T>),
    CnnEnsemble(CnnModel<T>, TreeEnsemble<T>),
}

impl<T: Scalar> LoadedModel<T> {
    pub fn cnn(&self) -> &CnnModel<T> {
        match self {
            LoadedModel::Cnn(m) | LoadedModel::CnnEnsemble(m, _) => m,
        }
    }

    /// Probability for one window.
    pub fn predict(&self, window: &NormalizedWindow<T>) -> Result<T, ModelError> {
        match self {
            LoadedModel::Cnn(m) => Ok(cnn_forward(m, window)?.probability),
            LoadedModel::CnnEnsemble(m, e) => ensemble_forward(e, &cnn_forward(m, window)?.embedding),
        }
    }
}

/// Reads and validates the weight file named by `descriptor`. Nothing is
/// retained on failure.
pub fn load_model<T: Scalar>(descriptor: &ModelDescriptor) -> Result<LoadedModel<T>, ModelError> {
    if !(descriptor.threshold > 0.0 && descriptor.threshold < 1.0) {
        return Err(ModelError::Descriptor(format!("threshold {} outside (0,1)", descriptor.threshold)));
    }
    let path = &descriptor.weight_file;
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ModelError::NotFound(path.clone()),
        _ => ModelError::Io { path: path.clone(), message: e.to_string() },
    })?;
    let decoded = weights::decode::<T>(&bytes)?;
    if decoded.kind != descriptor.kind {
        return Err(ModelError::Descriptor(format!(
            "{} is declared {} but the weight file holds {}",
            descriptor.model_id, descriptor.kind, decoded.kind
        )));
    }
    if decoded.cnn.model_id != descriptor.model_id {
        return Err(ModelError::Descriptor(format!(
            "weight file belongs to {:?}, not {:?}",
            decoded.cnn.model_id, descriptor.model_id
        )));
    }
    Ok(match decoded.ensemble {
        Some(e) => LoadedModel::CnnEnsemble(decoded.cnn, e),
        None => LoadedModel::Cnn(decoded.cnn),
    })
}

#[derive(Debug, Clone)]
pub struct RegistryEntry<T> {
    pub descriptor: ModelDescriptor,
    pub model: Result<LoadedModel<T>, ModelError>,
}

/// The models run against every window, ordered by `model_id`. A model that
/// failed to load stays in the registry and reports its error per window.
#[derive(Debug, Clone)]
pub struct ModelRegistry<T> {
    entries: Vec<RegistryEntry<T>>,
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    models: Vec<ModelDescriptor>,
}

impl<T: Scalar> ModelRegistry<T> {
    pub fn load(descriptors: &[ModelDescriptor]) -> Self {
        let mut entries: Vec<RegistryEntry<T>> = descriptors
            .iter()
            .map(|d| RegistryEntry { descriptor: d.clone(), model: load_model(d) })
            .collect();
        entries.sort_by(|a, b| a.descriptor.model_id.cmp(&b.descriptor.model_id));
        ModelRegistry { entries }
    }

    /// Parses a TOML file with a `[[models]]` array; relative weight paths
    /// resolve against the file's directory.
    pub fn descriptors_from_file(path: &Path) -> Result<Vec<ModelDescriptor>, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ModelError::NotFound(path.to_path_buf()),
            _ => ModelError::Io { path: path.to_path_buf(), message: e.to_string() },
        })?;
        let file: RegistryFile = toml::from_str(&text).map_err(|e| ModelError::Descriptor(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(file.models.into_iter().map(|d| d.resolved(base)).collect())
    }

    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        Ok(Self::load(&Self::descriptors_from_file(path)?))
    }

    pub fn entries(&self) -> &[RegistryEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.descriptor.model_id.as_str()).collect()
    }
}

/// Outcome of one model on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPrediction {
    pub model_id: String,
    pub threshold: f64,
    pub probability: Result<f64, ModelError>,
}

/// Runs every registered model; one model failing leaves the others intact.
pub fn predict_all<T: Scalar>(window: &NormalizedWindow<T>, registry: &ModelRegistry<T>) -> Vec<ModelPrediction> {
    registry
        .entries
        .iter()
        .map(|entry| ModelPrediction {
            model_id: entry.descriptor.model_id.clone(),
            threshold: entry.descriptor.threshold,
            probability: entry
                .model
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|m| m.predict(window))
                .map(Scalar::as_f64),
        })
        .collect()
}
