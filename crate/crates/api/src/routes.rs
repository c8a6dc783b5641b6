use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use ecg_core::{timefmt, DeviceKind, RecordingId, StudyId};
use ecg_lake::{Lake, LakeError, ProcessingStatus};
use ecg_pipeline::{Clock, IngestError, IngestRequest, Ingestor, PipelineStatus};
use serde::Serialize;

use crate::views::*;

/// Larger ingest bodies get 413.
pub const MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

const IMMUTABLE: &str = "public, max-age=31536000, immutable";

#[derive(Clone)]
pub struct AppState {
    pub lake: Arc<Lake>,
    pub ingestor: Ingestor,
    pub status: Arc<PipelineStatus>,
    pub clock: Clock,
    pub poll_interval_s: f64,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/recordings", get(list_recordings).post(ingest))
        .route("/v1/recordings/{id}", get(get_recording))
        .route("/v1/recordings/{id}/waveform", get(get_waveform))
        .route("/v1/results/{id}", get(get_results))
        .route("/v1/studies/{id}/timeline", get(get_timeline))
        .route("/v1/health", get(health))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown {what} {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<LakeError> for ApiError {
    fn from(e: LakeError) -> Self {
        let status = match e {
            LakeError::NotFound(_) => StatusCode::NOT_FOUND,
            LakeError::BadRequest(_) => StatusCode::BAD_REQUEST,
            LakeError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Adapter(a) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, a.code(), a.to_string()),
            IngestError::Lake(l) => l.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: ErrorDetail { code: self.code, message: self.message } };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn immutable<T: Serialize>(body: T) -> Response {
    let mut resp = Json(body).into_response();
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static(IMMUTABLE));
    resp
}

fn no_store<T: Serialize>(body: T) -> Response {
    let mut resp = Json(body).into_response();
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp
}

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> ApiResult<Option<&'a str>> {
    match headers.get(name) {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .map(|s| Some(s.trim()).filter(|s| !s.is_empty()))
            .map_err(|_| ApiError::bad_request("BadHeader", format!("{name} is not valid text"))),
    }
}

async fn ingest(State(st): State<AppState>, headers: HeaderMap, body: Result<Bytes, BytesRejection>) -> ApiResult<Response> {
    let body = body.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "PayloadTooLarge", format!("body exceeds {MAX_BODY_BYTES} bytes"))
        } else {
            ApiError::bad_request("BadBody", r.body_text())
        }
    })?;
    let device: DeviceKind = header_str(&headers, "x-device-kind")?
        .ok_or_else(|| ApiError::bad_request("MissingHeader", "X-Device-Kind is required"))?
        .parse()
        .map_err(|e: ecg_core::DomainError| ApiError::bad_request("UnknownDevice", e.to_string()))?;
    let external_id = header_str(&headers, "x-external-id")?
        .ok_or_else(|| ApiError::bad_request("MissingHeader", "X-External-Id is required"))?
        .to_string();
    let fetched_at = header_str(&headers, "x-fetched-at")?
        .map(|s| timefmt::parse(s).map_err(|e| ApiError::bad_request("BadHeader", format!("X-Fetched-At: {e}"))))
        .transpose()?;
    if body.is_empty() {
        return Err(ApiError::bad_request("EmptyBody", "request body is empty"));
    }
    let receipt = blocking(move || {
        st.ingestor
            .ingest(IngestRequest {
                bytes: body.to_vec(),
                declared: Some(device),
                external_id,
                source_uri: "api:/v1/recordings".into(),
                fetched_at,
                available_at: None,
            })
            .map_err(ApiError::from)
    })
    .await?;
    let status = if receipt.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(IngestResponse::new(&receipt.entry, receipt.duplicate))).into_response())
}

async fn list_recordings(State(st): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let mut since = 0u64;
    let mut device = None;
    for (k, v) in &q {
        match k.as_str() {
            "since" => {
                since = v.parse().map_err(|_| ApiError::bad_request("BadQuery", format!("since must be a sequence number, got {v:?}")))?
            }
            "device" => {
                device = Some(v.parse::<DeviceKind>().map_err(|e| ApiError::bad_request("BadQuery", e.to_string()))?)
            }
            other => return Err(ApiError::bad_request("BadQuery", format!("unknown parameter {other:?}"))),
        }
    }
    let entries = st.lake.list_since(since)?;
    let next_since = entries.last().map_or(since, |e| e.index_seq);
    let items = entries
        .iter()
        .filter(|e| device.is_none_or(|d| d == e.device))
        .map(|e| RecordingSummary::new(e, &ProcessingStatus::from_outcomes(&st.lake.outcomes(&e.recording_id))))
        .collect();
    Ok(no_store(RecordingList { items, next_since }))
}

fn recording_id(raw: &str) -> ApiResult<RecordingId> {
    raw.parse().map_err(|_| ApiError::not_found("recording", raw))
}

async fn get_recording(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = recording_id(&id)?;
    let detail = blocking(move || {
        let entry = st.lake.entry(&id).ok_or_else(|| ApiError::not_found("recording", id.as_str()))?;
        let stored = st.lake.get_recording(&id)?;
        let rec = stored.recording;
        let status = ProcessingStatus::from_outcomes(&st.lake.outcomes(&id));
        Ok(RecordingDetail {
            summary: RecordingSummary::new(&entry, &status),
            recorded_at: rec.recorded_at,
            lead: rec.lead.clone(),
            sample_rate_hz: rec.sample_rate_hz,
            n_samples: rec.samples.len(),
            duration_s: rec.duration_s(),
        })
    })
    .await?;
    // status inside changes over time, so this one is not marked immutable
    Ok(no_store(detail))
}

async fn get_waveform(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = recording_id(&id)?;
    let wf = blocking(move || {
        if st.lake.entry(&id).is_none() {
            return Err(ApiError::not_found("recording", id.as_str()));
        }
        let rec = st.lake.get_recording(&id)?.recording;
        Ok(Waveform {
            recording_id: rec.recording_id.clone(),
            device: rec.device,
            recorded_at: rec.recorded_at,
            sample_rate_hz: rec.sample_rate_hz,
            unit: "mV",
            n_samples: rec.samples.len(),
            duration_s: rec.duration_s(),
            samples: rec.samples,
        })
    })
    .await?;
    Ok(immutable(wf))
}

async fn get_results(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = recording_id(&id)?;
    if st.lake.entry(&id).is_none() {
        return Err(ApiError::not_found("recording", id.as_str()));
    }
    let outcomes = st.lake.outcomes(&id);
    Ok(no_store(Results::from_outcomes(id, &outcomes)))
}

async fn get_timeline(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let study: StudyId = id.parse().map_err(|_| ApiError::not_found("study", &id))?;
    let timeline = blocking(move || {
        let entries = st.lake.entries_for_study(&study);
        if entries.is_empty() {
            return Err(ApiError::not_found("study", study.as_str()));
        }
        let mut items = Vec::with_capacity(entries.len());
        for e in entries {
            let rec = st.lake.get_recording(&e.recording_id)?.recording;
            let results = Results::from_outcomes(e.recording_id.clone(), &st.lake.outcomes(&e.recording_id));
            items.push(TimelineItem {
                recording_id: e.recording_id,
                index_seq: e.index_seq,
                device: e.device,
                recorded_at: rec.recorded_at,
                received_at: e.received_at,
                status: results.status,
                results: results.results,
            });
        }
        items.sort_by(|a, b| a.recorded_at.cmp(&b.recorded_at).then(a.index_seq.cmp(&b.index_seq)));
        Ok(Timeline { study_id: study, items })
    })
    .await?;
    Ok(no_store(timeline))
}

async fn health(State(st): State<AppState>) -> Response {
    let now = st.clock.now();
    let lake = match st.lake.check() {
        Ok(()) => LakeHealth { reachable: true, recordings: st.lake.len(), error: None },
        Err(e) => LakeHealth { reachable: false, recordings: st.lake.len(), error: Some(e.to_string()) },
    };
    let s = st.status.snapshot();
    let age = s.last_tick_at.map(|t| timefmt::seconds_between(t, now).max(0.0));
    let stale = age.is_some_and(|a| a > 2.0 * st.poll_interval_s);
    let body = Health {
        status: if lake.reachable && !stale { "ok" } else { "degraded" },
        now,
        lake,
        poller: PollerHealth {
            ticks: s.ticks,
            last_tick_at: s.last_tick_at,
            last_tick_age_s: age,
            poll_interval_s: st.poll_interval_s,
            cursor: s.cursor,
            processed: s.processed,
            last_error: s.last_error,
        },
    };
    no_store(body)
}
