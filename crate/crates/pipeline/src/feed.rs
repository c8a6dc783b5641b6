//! Client for vendor record feeds (`GET /records?since=<cursor>`).
//!
//! Response envelope:
//!
//! ```text
//! {"cursor": "<opaque>", "records": [
//!     {"availableAt": "<rfc3339>", "externalId": "<patient ref>", "record": <raw vendor record>}
//! ]}
//! ```
//!
//! `record` is kept as the exact bytes the vendor sent, since its digest is
//! the recording id.

use chrono::{DateTime, Utc};
use ecg_core::{timefmt, DeviceKind};
use serde::Deserialize;
use serde_json::value::RawValue;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("feed request failed: {0}")]
    Http(String),
    #[error("feed returned status {0}")]
    Status(u16),
    #[error("malformed feed response: {0}")]
    Body(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedRecord {
    pub available_at: DateTime<Utc>,
    pub external_id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedBatch {
    pub cursor: String,
    pub records: Vec<FeedRecord>,
}

#[derive(Deserialize)]
struct Envelope<'a> {
    cursor: String,
    #[serde(borrow)]
    records: Vec<EnvelopeRecord<'a>>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct EnvelopeRecord<'a> {
    #[serde(with = "timefmt")]
    available_at: DateTime<Utc>,
    external_id: String,
    #[serde(borrow)]
    record: &'a RawValue,
}

pub fn parse_batch(body: &[u8]) -> Result<FeedBatch, FeedError> {
    let env: Envelope = serde_json::from_slice(body).map_err(|e| FeedError::Body(e.to_string()))?;
    Ok(FeedBatch {
        cursor: env.cursor,
        records: env
            .records
            .into_iter()
            .map(|r| FeedRecord {
                available_at: r.available_at,
                external_id: r.external_id,
                bytes: r.record.get().as_bytes().to_vec(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone)]
pub struct VendorFeed {
    pub device: DeviceKind,
    pub base_url: String,
    client: reqwest::blocking::Client,
}

impl VendorFeed {
    pub fn new(device: DeviceKind, base_url: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(10))
            .build()
            .expect("http client builds");
        VendorFeed { device, base_url: base_url.into().trim_end_matches('/').to_string(), client }
    }

    pub fn records_url(&self) -> String {
        format!("{}/records", self.base_url)
    }

    pub fn fetch(&self, since: &str) -> Result<FeedBatch, FeedError> {
        let resp = self
            .client
            .get(self.records_url())
            .query(&[("since", since)])
            .send()
            .map_err(|e| FeedError::Http(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(FeedError::Status(resp.status().as_u16()));
        }
        let body = resp.bytes().map_err(|e| FeedError::Http(e.to_string()))?;
        parse_batch(&body)
    }
}
