use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ontodistill::gateway::{Gateway, GatewayConfig, GatewayMode, ScriptedTransport};
use ontodistill::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

const SEED: &str = "digraph { Root -> Vehicle; Root -> Road; }";
const GROWN: &str = "digraph { Root -> Vehicle; Root -> Road; Vehicle -> Car; Vehicle -> Truck; }";

fn app(replies: &'static [&'static str]) -> axum::Router {
    let state = AppState::new().with_gateways(Arc::new(move |_: &GatewayConfig, _| {
        let config = GatewayConfig {
            mode: GatewayMode::Record,
            ..GatewayConfig::default()
        };
        Ok(Gateway::with_transport(config, Arc::new(ScriptedTransport::new(replies.iter().copied()))))
    }));
    router(state)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

async fn create(app: &axum::Router) -> String {
    let (status, body) = json_call(
        app,
        "POST",
        "/sessions",
        Some(json!({
            "domain": "traffic",
            "seed_dot": SEED,
            "config": {"stopping": {"max_iterations": 1}}
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["concepts"], 3);
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn step_review_and_export() {
    let app = app(&[GROWN]);
    let id = create(&app).await;

    let (status, body) = json_call(&app, "POST", &format!("/sessions/{id}/tasks/hierarchy/step"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["outcome"], "parked");
    assert_eq!(body["status"], "awaiting_review");

    let (status, it) = json_call(&app, "GET", &format!("/sessions/{id}/iterations/1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(it["task"], "hierarchy");
    assert!(it["decision"].is_null());

    let (status, body) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/control"),
        Some(json!({"task": "hierarchy", "command": "accept"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "completed");
    assert_eq!(body["stop_reason"], "max_iterations");

    let (status, dot) = call(&app, "GET", &format!("/sessions/{id}/ontology?format=dot"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(dot.contains("\"Vehicle\" -> \"Truck\";"), "{dot}");

    let (_, doc) = json_call(&app, "GET", &format!("/sessions/{id}/ontology?format=doc"), None).await;
    assert_eq!(doc["concepts"].as_array().unwrap().len(), 5);

    let (_, log) = json_call(&app, "GET", &format!("/sessions/{id}/tasks/hierarchy/log"), None).await;
    assert_eq!(log["iterations"].as_array().unwrap().len(), 1);

    let (status, report) = json_call(&app, "GET", &format!("/sessions/{id}/validate"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn error_statuses() {
    let app = app(&[]);
    let id = create(&app).await;
    let missing = "00000000-0000-0000-0000-000000000000";

    let (status, body) = json_call(&app, "GET", &format!("/sessions/{missing}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    assert_eq!(call(&app, "GET", "/sessions/not-a-uuid", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(
        call(&app, "POST", &format!("/sessions/{id}/tasks/ontology/step"), None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(call(&app, "GET", &format!("/sessions/{id}/iterations/7"), None).await.0, StatusCode::NOT_FOUND);

    // Definitions before the hierarchy is done.
    let (status, body) = json_call(&app, "POST", &format!("/sessions/{id}/tasks/definition/step"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "invalid_transition");

    let (status, _) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/control"),
        Some(json!({"task": "hierarchy", "command": "resume"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/control"),
        Some(json!({"task": "hierarchy", "command": "revert", "to_iteration": 4})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = json_call(&app, "GET", &format!("/sessions/{id}/ontology?format=png"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, body) = json_call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"domain": "x", "seed_dot": "graph { a -- b }"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    let (status, _) = json_call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"domain": "x", "config": {"max_parallel_requests": 8}})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn templates_can_be_replaced() {
    let app = app(&[GROWN]);
    let id = create(&app).await;
    let uri = format!("/sessions/{id}/prompt-template/hierarchy");
    let (status, mut template) = json_call(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(template["context"].as_str().unwrap().contains("traffic"));

    template["instruction"] = json!("List more concepts for {ONTOLOGY_DOT} in batches of {COUNT}. Mention {BATCH}.");
    let (status, body) = json_call(&app, "PUT", &uri, Some(template.clone())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "BATCH is not allowed here: {body}");

    template["instruction"] = json!("Extend {ONTOLOGY_DOT} with up to {COUNT} concepts. Be brief.");
    let (status, _) = json_call(&app, "PUT", &uri, Some(template.clone())).await;
    assert_eq!(status, StatusCode::OK);

    let wrong_task = format!("/sessions/{id}/prompt-template/definition");
    assert_eq!(json_call(&app, "PUT", &wrong_task, Some(template)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, fetched) = json_call(&app, "GET", &uri, None).await;
    assert_eq!(fetched["instruction"], "Extend {ONTOLOGY_DOT} with up to {COUNT} concepts. Be brief.");
    assert!(fetched["format_spec"].as_str().unwrap().contains("DOT"));

    json_call(&app, "POST", &format!("/sessions/{id}/tasks/hierarchy/step"), None).await;
    let (_, it) = json_call(&app, "GET", &format!("/sessions/{id}/iterations/1"), None).await;
    assert!(it["prompt"]["text"].as_str().unwrap().contains("Be brief."));
}

#[tokio::test]
async fn sessions_persist_to_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new().with_data_dir(dir.path().to_path_buf()).unwrap();
    let app = router(state);
    let id = create(&app).await;
    assert!(dir.path().join(&id).join("manifest.json").is_file());

    let reopened = router(AppState::new().with_data_dir(dir.path().to_path_buf()).unwrap());
    let (status, body) = json_call(&reopened, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["concepts"], 3);
}

#[tokio::test]
async fn rejected_edits_carry_the_report() {
    let app = app(&[GROWN]);
    let id = create(&app).await;
    json_call(&app, "POST", &format!("/sessions/{id}/tasks/hierarchy/step"), None).await;
    // Re-parenting Vehicle under its own child would close a cycle.
    let (status, body) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/control"),
        Some(json!({"task": "hierarchy", "command": "accept_with_edits",
                    "edits": [{"kind": "reparent", "concept": "Vehicle", "parent": "Car"}]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["error"], "edit_rejected");
    assert_eq!(body["detail"]["violations"][0]["rule"], "Cycle");

    let (status, _) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/control"),
        Some(json!({"task": "hierarchy", "command": "pause"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = json_call(&app, "POST", &format!("/sessions/{id}/tasks/hierarchy/step"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "stepping a paused run");
}
