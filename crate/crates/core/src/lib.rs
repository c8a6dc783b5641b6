//! Core of the ECG platform: shared domain types, device payload adapters,
//! the preprocessing chain that turns a recording into a model-ready window,
//! and the CNN / tree-ensemble inference engine.
//!
//! The numeric code (`dsp`, `inference`) is generic over [`Scalar`] so the
//! same kernels run in `f32` or `f64`. The platform itself runs in `f64`;
//! the aliases below name those instantiations.

pub mod adapters;
pub mod dsp;
pub mod inference;
pub mod model;
pub mod scalar;
pub mod timefmt;

pub use adapters::{detect_format, parse_payload, AdapterConfig, AdapterError, DeviceReading};
pub use dsp::{preprocess, DspConfig, DspError, PreprocessError, WindowPolicy};
pub use inference::{
    cnn_forward, ensemble_forward, load_model, predict_all, CnnModel, LoadedModel, ModelDescriptor,
    ModelError, ModelKind, ModelPrediction, ModelRegistry, TreeEnsemble,
};
pub use model::{
    content_hash, sigmoid, DeviceKind, DomainError, EcgRecording, NormalizedWindow,
    PredictionResult, RawDeviceRecord, RecordingId, StageTimings, StudyId,
};
pub use scalar::Scalar;

/// Model input length: 10 s of Lead I at 500 Hz.
pub const WINDOW_LEN: usize = 5000;
/// Sample rate the models consume.
pub const MODEL_RATE_HZ: u32 = 500;
/// Acquisition length every supported device records.
pub const ACQUISITION_S: f64 = 30.0;

pub type Window = NormalizedWindow<f64>;
pub type Window32 = NormalizedWindow<f32>;
pub type Cnn = CnnModel<f64>;
pub type Cnn32 = CnnModel<f32>;
pub type Ensemble = TreeEnsemble<f64>;
pub type Ensemble32 = TreeEnsemble<f32>;
pub type Registry = ModelRegistry<f64>;
pub type Registry32 = ModelRegistry<f32>;
