use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use pbo_service::http::router;
use pbo_service::SessionManager;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 24).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

fn create_body(seed: u64) -> Value {
    json!({
        "domain": {"kind": "box", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "q": 2,
        "algo": "qeubo",
        "seed": seed,
        "raw_candidates": 64,
        "restarts": 2,
        "max_iters": 20
    })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_lifecycle_over_http() {
    let app = router(Arc::new(SessionManager::in_memory()));
    let (st, created) = call(&app, "POST", "/sessions", Some(create_body(3))).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["revision"], 0);
    let query = created["query"].as_array().unwrap();
    assert_eq!(query.len(), 2);
    assert!(query.iter().all(|p| p.as_array().unwrap().len() == 2));

    let (st, next) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/responses"),
        Some(json!({"revision": 0, "choice": 1})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(next["revision"], 1);
    assert_eq!(next["query"].as_array().unwrap().len(), 2);
    assert_eq!(next["incumbent"].as_array().unwrap().len(), 2);

    let (st, err) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/responses"),
        Some(json!({"revision": 0, "choice": 0})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(err["code"], "revision_conflict");
    assert!(err["message"].is_string());

    let (st, err) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/responses"),
        Some(json!({"revision": 1, "choice": 5})),
    )
    .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "choice_out_of_range");

    let (st, rec) = call(&app, "GET", &format!("/sessions/{id}/recommendation"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(rec["point"], next["incumbent"]);
    assert_eq!(rec["trace"].as_array().unwrap().len(), 2);

    let (st, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(state["revision"], 1);
    assert_eq!(state["status"], "awaiting_response");
    assert_eq!(state["pending_query"], next["query"]);
    assert_eq!(state["dataset"]["observations"].as_array().unwrap().len(), 1);
    assert_eq!(state["dataset"]["observations"][0]["choice"], 1);
    assert_eq!(state["config"]["algo"], "qeubo");

    let (st, _) = call(&app, "POST", &format!("/sessions/{id}/close"), None).await;
    assert_eq!(st, StatusCode::NO_CONTENT);
    let (st, err) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/responses"),
        Some(json!({"revision": 1, "choice": 0})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session_closed");
    let (st, _) = call(&app, "GET", &format!("/sessions/{id}/recommendation"), None).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn error_bodies() {
    let app = router(Arc::new(SessionManager::in_memory()));
    let (st, err) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_session");

    let mut body = create_body(1);
    body["q"] = json!(1);
    let (st, err) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid_request");

    let (st, err) = call(&app, "POST", "/sessions", Some(json!({"q": 2}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid_request");

    let mut body = create_body(1);
    body["domain"] = json!({"kind": "box", "lower": [1.0], "upper": [0.0]});
    let (st, err) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid_request");
}
