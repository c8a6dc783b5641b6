//! Fixture model set: lvsd and structural as plain CNNs, hcm as CNN plus
//! tree ensemble over the embedding. Weights are seeded, not trained.

use std::path::Path;

use ecg_core::inference::fixture::{random_cnn, random_ensemble, CnnPlan};
use ecg_core::inference::weights;
use ecg_core::{ModelDescriptor, ModelKind};
use serde::Serialize;

pub const MODEL_IDS: [&str; 3] = ["hcm", "lvsd", "structural"];
pub const REGISTRY_FILE: &str = "models.toml";

/// Narrow plan for tests that only need the pipeline to run.
pub fn small_plan() -> CnnPlan {
    CnnPlan { channels: vec![4; 7], kernels: vec![3; 7], dense: vec![8, 4], ..CnnPlan::default() }
}

#[derive(Serialize)]
struct RegistryFile<'a> {
    models: &'a [RegistryRow],
}

#[derive(Serialize)]
struct RegistryRow {
    model_id: String,
    kind: String,
    weight_file: String,
    threshold: f64,
}

/// Writes `<id>.ecgw` for each model plus `models.toml` with relative paths.
pub fn write_fixture_models(dir: &Path, plan: &CnnPlan, seed: u64) -> std::io::Result<Vec<ModelDescriptor>> {
    std::fs::create_dir_all(dir)?;
    let mut descriptors = Vec::new();
    let mut rows = Vec::new();
    for (i, id) in MODEL_IDS.iter().enumerate() {
        let model_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let cnn = random_cnn::<f64>(id, plan, model_seed);
        let (kind, bytes) = if *id == "hcm" {
            let ens = random_ensemble::<f64>(id, cnn.embedding_dim(), 20, 3, model_seed ^ 0x5eed);
            (ModelKind::CnnEnsemble, weights::encode(&cnn, Some(&ens)))
        } else {
            (ModelKind::Cnn, weights::encode(&cnn, None))
        };
        let file = format!("{id}.ecgw");
        std::fs::write(dir.join(&file), bytes)?;
        rows.push(RegistryRow { model_id: id.to_string(), kind: kind.to_string(), weight_file: file, threshold: 0.5 });
        descriptors.push(ModelDescriptor { model_id: id.to_string(), kind, weight_file: dir.join(format!("{id}.ecgw")), threshold: 0.5 });
    }
    let toml = toml::to_string(&RegistryFile { models: &rows }).expect("registry serializes");
    std::fs::write(dir.join(REGISTRY_FILE), toml)?;
    Ok(descriptors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecg_core::Registry;

    #[test]
    fn written_registry_loads_all_three() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_fixture_models(dir.path(), &small_plan(), 1).unwrap();
        let read = Registry::descriptors_from_file(&dir.path().join(REGISTRY_FILE)).unwrap();
        assert_eq!(written, read);
        let reg = Registry::load(&read);
        assert_eq!(reg.model_ids(), MODEL_IDS);
        assert!(reg.entries().iter().all(|e| e.model.is_ok()));
    }
}
