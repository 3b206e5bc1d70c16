use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lusbio::core::data::{generate_synthetic, SynthParams};
use lusbio::core::schema::SCHEMA_VERSION;
use lusbio::server::{self, AnnotationStore, LOG_FILE, SCHEMA_HEADER};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    let ds = generate_synthetic(&SynthParams {
        n_patients: 3,
        videos_per_patient: 2,
        frames_per_video: 4,
        frame_side: 8,
        ..SynthParams::default()
    })
    .unwrap();
    server::app(ds, dir).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let schema = resp.headers().get(SCHEMA_HEADER).map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, schema)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes, _) = call(app, method, uri, body.map(|b| b.to_string())).await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION, "{uri}");
    (status, v)
}

fn payload(severity: u8, annotator: &str) -> Value {
    let bits: Vec<u8> = (0..38).map(|i| (i % 5 == 0) as u8).collect();
    json!({
        "biomarkers": bits,
        "severity": severity,
        "annotator": annotator,
        "timestamp": "2026-03-01T10:15:00Z",
    })
}

#[tokio::test]
async fn schema_lists_all_features() {
    let dir = tempfile::tempdir().unwrap();
    let (status, v) = call_json(&app(dir.path()), "GET", "/api/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["total_features"], 38);
    assert_eq!(v["features"].as_array().unwrap().len(), 38);
}

#[tokio::test]
async fn annotation_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, list) = call_json(&app, "GET", "/api/videos", None).await;
    let videos = list["videos"].as_array().unwrap();
    assert_eq!(videos.len(), 6);
    assert!(videos.iter().all(|v| v["annotated"] == false));
    let id = videos[1]["video_id"].as_str().unwrap().to_string();
    let uri = format!("/api/videos/{id}/annotation");

    let (status, _) = call_json(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let sent = payload(2, "alice");
    let (status, posted) = call_json(&app, "POST", &uri, Some(sent.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (status, got) = call_json(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got["annotation"], sent);
    assert_eq!(
        serde_json::to_vec(&got["annotation"]).unwrap(),
        serde_json::to_vec(&posted["annotation"]).unwrap()
    );

    let (_, list) = call_json(&app, "GET", "/api/videos", None).await;
    let annotated: Vec<bool> = list["videos"].as_array().unwrap().iter().map(|v| v["annotated"] == true).collect();
    assert_eq!(annotated, [false, true, false, false, false, false]);
}

#[tokio::test]
async fn repeat_submissions_overwrite_and_are_all_logged() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let uri = "/api/videos/P0000-V0/annotation";
    call_json(&app, "POST", uri, Some(payload(1, "alice"))).await;
    call_json(&app, "POST", uri, Some(payload(3, "alice"))).await;
    call_json(&app, "POST", uri, Some(payload(0, "bob"))).await;
    let (_, got) = call_json(&app, "GET", uri, None).await;
    assert_eq!(got["annotation"]["annotator"], "bob");
    let records = got["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["severity"], 3);

    let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 3);

    // state survives a restart
    let store = AnnotationStore::open(dir.path()).unwrap();
    assert_eq!(store.get("P0000-V0").unwrap().by_annotator.len(), 2);
}

#[tokio::test]
async fn invalid_submissions_get_field_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let uri = "/api/videos/P0000-V0/annotation";

    let mut short = payload(1, "alice");
    short["biomarkers"].as_array_mut().unwrap().pop();
    let (status, v) = call_json(&app, "POST", uri, Some(short)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["errors"][0]["field"], "biomarkers");
    assert!(v["errors"][0]["message"].as_str().unwrap().contains("37"));

    let mut bad = payload(4, " ");
    bad["biomarkers"][3] = json!(0.5);
    bad["timestamp"] = json!("yesterday");
    let (status, v) = call_json(&app, "POST", uri, Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = v["errors"].as_array().unwrap().iter().map(|e| e["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["biomarkers", "severity", "annotator", "timestamp"]);

    let (status, bytes, _) = call(&app, "POST", uri, Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);

    let (status, _) = call_json(&app, "POST", "/api/videos/nope/annotation", Some(payload(1, "a"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(!dir.path().join(LOG_FILE).exists());
}

#[tokio::test]
async fn frames_are_served_as_png() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, bytes, schema) = call(&app, "GET", "/api/videos/P0002-V0/frames?i=3", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema.as_deref(), Some(SCHEMA_VERSION.to_string().as_str()));
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let reader = decoder.read_info().unwrap();
    assert_eq!((reader.info().width, reader.info().height), (8, 8));

    let (status, _) = call_json(&app, "GET", "/api/videos/P0002-V0/frames?i=4", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, "GET", "/api/videos/zzz/frames?i=0", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
