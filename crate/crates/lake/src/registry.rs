//! External identifier → study pseudonym map.
//!
//! Study ids are `HMAC-SHA256(instance key, external id)` truncated to 24
//! hex characters. The map lives in its own file so the rest of the lake
//! can be shared without it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ecg_core::StudyId;
use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use crate::{fsutil, LakeError};

pub(crate) struct Registry {
    path: PathBuf,
    key: Vec<u8>,
    map: BTreeMap<String, StudyId>,
    sync: bool,
}

impl Registry {
    pub fn open(path: PathBuf, key: Vec<u8>, sync: bool) -> Result<Self, LakeError> {
        let map = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| LakeError::Corrupt(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(LakeError::io(&path, e)),
        };
        Ok(Registry { path, key, map, sync })
    }

    pub fn pseudonym(key: &[u8], external_id: &str) -> StudyId {
        let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(external_id.as_bytes());
        let digest = hex::encode(mac.finalize().into_bytes());
        digest[..StudyId::HEX_LEN].parse().expect("hex digest is a valid study id")
    }

    pub fn register(&mut self, external_id: &str) -> Result<StudyId, LakeError> {
        if external_id.trim().is_empty() {
            return Err(LakeError::BadRequest("external id must not be empty".into()));
        }
        if let Some(id) = self.map.get(external_id) {
            return Ok(id.clone());
        }
        let id = Self::pseudonym(&self.key, external_id);
        self.map.insert(external_id.to_string(), id.clone());
        let bytes = serde_json::to_vec_pretty(&self.map).expect("map serializes");
        if let Err(e) = fsutil::write_atomic(&self.path, &bytes, self.sync) {
            self.map.remove(external_id);
            return Err(LakeError::io(&self.path, e));
        }
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }
}
