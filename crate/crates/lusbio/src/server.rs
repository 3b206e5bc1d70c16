//! HTTP API behind the browser annotator.
//!
//! Submissions are validated against the biomarker schema, appended to a
//! JSONL log and folded into a current-state file that is replaced
//! atomically. One lock serialises all writes, so concurrent submissions
//! never interleave.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use lusbio_core::data::{Dataset, Frames};
use lusbio_core::schema::{validate_annotation, BiomarkerSchema, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::formats;
use crate::{Error, Result};

pub const LOG_FILE: &str = "annotations.log.jsonl";
pub const STATE_FILE: &str = "annotations.json";
pub const SCHEMA_HEADER: &str = "x-schema-version";
const MAX_SEVERITY: i64 = 3;

/// Body of an annotation submission, before validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub biomarkers: Vec<f64>,
    pub severity: i64,
    pub annotator: String,
    pub timestamp: String,
}

/// A validated annotation as stored and served.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub biomarkers: Vec<u8>,
    pub severity: u8,
    pub annotator: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Checks a submission; returns every problem found rather than the first.
pub fn validate_submission(s: &Submission, schema: &BiomarkerSchema) -> std::result::Result<Annotation, Vec<FieldError>> {
    let mut errors: Vec<FieldError> = validate_annotation(&s.biomarkers, schema)
        .into_iter()
        .map(|issue| FieldError::new("biomarkers", issue.to_string()))
        .collect();
    if !(0..=MAX_SEVERITY).contains(&s.severity) {
        errors.push(FieldError::new("severity", format!("must be in 0..={MAX_SEVERITY}, found {}", s.severity)));
    }
    if s.annotator.trim().is_empty() {
        errors.push(FieldError::new("annotator", "must not be empty"));
    }
    if chrono::DateTime::parse_from_rfc3339(&s.timestamp).is_err() {
        errors.push(FieldError::new("timestamp", format!("not an ISO-8601 date-time: {:?}", s.timestamp)));
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(Annotation {
        biomarkers: s.biomarkers.iter().map(|&v| v as u8).collect(),
        severity: s.severity as u8,
        annotator: s.annotator.clone(),
        timestamp: s.timestamp.clone(),
    })
}

/// Current state: per video, the latest record of each annotator, plus
/// which annotator submitted last.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub videos: BTreeMap<String, VideoAnnotations>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotations {
    pub latest: Option<Annotation>,
    pub by_annotator: BTreeMap<String, Annotation>,
}

pub struct AnnotationStore {
    dir: PathBuf,
    state: StoreState,
}

impl AnnotationStore {
    /// Opens `dir`, loading the current-state file when present.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(STATE_FILE);
        let state = if path.exists() {
            formats::read_json(&path)?
        } else {
            StoreState::default()
        };
        Ok(AnnotationStore {
            dir: dir.to_path_buf(),
            state,
        })
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoAnnotations> {
        self.state.videos.get(video_id)
    }

    /// Logs the submission, then replaces the state file. A repeat from the
    /// same annotator overwrites their record; both stay in the log.
    pub fn submit(&mut self, video_id: &str, annotation: Annotation) -> Result<()> {
        let line = serde_json::to_vec(&json!({ "video_id": video_id, "annotation": annotation }))
            .expect("annotation serialises");
        formats::append_line(&self.dir.join(LOG_FILE), &line)?;
        let mut next = self.state.clone();
        let entry = next.videos.entry(video_id.to_string()).or_default();
        entry.by_annotator.insert(annotation.annotator.clone(), annotation.clone());
        entry.latest = Some(annotation);
        formats::write_json(&self.dir.join(STATE_FILE), &next)?;
        self.state = next;
        Ok(())
    }
}

pub struct AppState {
    pub dataset: Dataset,
    pub schema: BiomarkerSchema,
    pub store: Mutex<AnnotationStore>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(schema))
        .route("/api/videos", get(videos))
        .route("/api/videos/{id}/frames", get(frame))
        .route("/api/videos/{id}/annotation", get(get_annotation).post(post_annotation))
        .with_state(state)
}

pub fn app(dataset: Dataset, store_dir: &Path) -> Result<Router> {
    let state = AppState {
        dataset,
        schema: BiomarkerSchema::canonical(),
        store: Mutex::new(AnnotationStore::open(store_dir)?),
    };
    Ok(router(Arc::new(state)))
}

/// Serves the API for the videos in `manifest` until the process stops.
pub async fn serve_annotations(port: u16, manifest: &Path, store_dir: &Path) -> anyhow::Result<()> {
    let app = app(formats::load_manifest(manifest)?, store_dir)?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind port {port}: {e}"))?;
    axum::serve(listener, app).await?;
    Ok(())
}

fn reply(status: StatusCode, mut body: Value) -> Response {
    if let Value::Object(map) = &mut body {
        map.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    (status, Json(body)).into_response()
}

fn not_found(id: &str) -> Response {
    reply(StatusCode::NOT_FOUND, json!({ "error": format!("unknown video {id:?}") }))
}

async fn schema(State(s): State<Arc<AppState>>) -> Response {
    let doc = serde_json::to_value(s.schema.document()).expect("schema serialises");
    reply(StatusCode::OK, doc)
}

async fn videos(State(s): State<Arc<AppState>>) -> Response {
    let store = s.store.lock().await;
    let list: Vec<Value> = s
        .dataset
        .records()
        .iter()
        .map(|r| {
            json!({
                "video_id": r.video_id,
                "patient_id": r.patient_id,
                "frames": r.frames.count(),
                "annotated": store.get(&r.video_id).is_some_and(|a| a.latest.is_some()),
            })
        })
        .collect();
    reply(StatusCode::OK, json!({ "videos": list }))
}

#[derive(Deserialize)]
struct FrameQuery {
    i: Option<usize>,
}

/// Grayscale 8-bit PNG; pixel values are clamped to `[0, 1]`.
pub fn encode_png(frames: &Frames, index: usize) -> Vec<u8> {
    let side = frames.side() as u32;
    let pixels: Vec<u8> = frames
        .frame(index)
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, side, side);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().expect("png header into memory");
    w.write_image_data(&pixels).expect("png data into memory");
    w.finish().expect("png finish into memory");
    out
}

async fn frame(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<FrameQuery>) -> Response {
    let Some(record) = s.dataset.records().iter().find(|r| r.video_id == id) else {
        return not_found(&id);
    };
    let i = q.i.unwrap_or(0);
    let count = record.frames.count();
    if i >= count {
        return reply(
            StatusCode::BAD_REQUEST,
            json!({ "error": format!("frame {i} out of range; video has {count}") }),
        );
    }
    let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, "image/png")], encode_png(&record.frames, i)).into_response();
    resp.headers_mut().insert(SCHEMA_HEADER, HeaderValue::from(SCHEMA_VERSION));
    resp
}

fn known(s: &AppState, id: &str) -> bool {
    s.dataset.records().iter().any(|r| r.video_id == id)
}

async fn get_annotation(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    if !known(&s, &id) {
        return not_found(&id);
    }
    let store = s.store.lock().await;
    match store.get(&id).and_then(|a| a.latest.as_ref().map(|l| (l, &a.by_annotator))) {
        Some((latest, all)) => reply(
            StatusCode::OK,
            json!({ "video_id": id, "annotation": latest, "records": all.values().collect::<Vec<_>>() }),
        ),
        None => reply(StatusCode::NOT_FOUND, json!({ "error": format!("video {id:?} has no annotation") })),
    }
}

async fn post_annotation(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Json<Submission>, JsonRejection>,
) -> Response {
    if !known(&s, &id) {
        return not_found(&id);
    }
    let submission = match body {
        Ok(Json(b)) => b,
        Err(e) => return reply(StatusCode::BAD_REQUEST, json!({ "error": e.body_text() })),
    };
    let annotation = match validate_submission(&submission, &s.schema) {
        Ok(a) => a,
        Err(errors) => return reply(StatusCode::UNPROCESSABLE_ENTITY, json!({ "errors": errors })),
    };
    let mut store = s.store.lock().await;
    match store.submit(&id, annotation.clone()) {
        Ok(()) => reply(StatusCode::OK, json!({ "video_id": id, "annotation": annotation })),
        Err(e) => reply(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })),
    }
}
