//! JSON API over a [`ReviewStore`].

use super::export::{task_records, write_sft};
use super::store::{Action, Decision, Payload, ReviewError, ReviewStore, TaskFilter, TaskKind, TaskStatus, DEFAULT_PAGE_SIZE};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use std::net::SocketAddr;
use std::sync::Arc;

/// Used when a decision body carries no `reviewer_id`.
pub const REVIEWER_HEADER: &str = "x-reviewer-id";

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::VersionConflict { .. } => (StatusCode::CONFLICT, "version_conflict"),
            ReviewError::AlreadyDecided { .. } => (StatusCode::CONFLICT, "already_decided"),
            ReviewError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            ReviewError::Precondition(_) => (StatusCode::UNPROCESSABLE_ENTITY, "precondition"),
            ReviewError::BadCursor => (StatusCode::BAD_REQUEST, "bad_cursor"),
            ReviewError::Io(_) | ReviewError::Corrupt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type Store = Arc<ReviewStore>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ListQuery {
    status: Option<TaskStatus>,
    kind: Option<TaskKind>,
    flag: Option<String>,
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn list_tasks(State(store): State<Store>, Query(q): Query<ListQuery>) -> Result<Response, ApiError> {
    let filter = TaskFilter { status: q.status, kind: q.kind, flag: q.flag.filter(|f| !f.is_empty()) };
    let cursor = q.cursor.as_deref().filter(|c| !c.is_empty());
    let page = store.list(&filter, cursor, q.limit.unwrap_or(DEFAULT_PAGE_SIZE))?;
    Ok(Json(page).into_response())
}

async fn get_task(State(store): State<Store>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let task = store.get(&id).ok_or(ReviewError::NotFound(id))?;
    Ok(Json(task).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    action: Action,
    reviewer_id: Option<String>,
    note: Option<String>,
    /// Either a tagged payload or the bare dialogue / knowledge item.
    edit_payload: Option<serde_json::Value>,
    expected_version: u64,
}

fn edit_payload(kind: TaskKind, v: serde_json::Value) -> Result<Payload, ApiError> {
    if let Ok(p) = serde_json::from_value::<Payload>(v.clone()) {
        return Ok(p);
    }
    let p = match kind {
        TaskKind::Dialogue => serde_json::from_value(v).map(Payload::Dialogue),
        TaskKind::Knowledge => serde_json::from_value(v).map(Payload::Knowledge),
    };
    p.map_err(|e| ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, code: "invalid", message: format!("edit_payload: {e}") })
}

async fn decide(
    State(store): State<Store>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let kind = store.get(&id).ok_or_else(|| ReviewError::NotFound(id.clone()))?.kind;
    let reviewer_id = body
        .reviewer_id
        .filter(|r| !r.trim().is_empty())
        .or_else(|| headers.get(REVIEWER_HEADER).and_then(|h| h.to_str().ok()).map(str::to_string))
        .ok_or_else(|| ApiError::bad_request("reviewer_id is required"))?;
    let edit_payload = body.edit_payload.map(|v| edit_payload(kind, v)).transpose()?;
    let decision = Decision { action: body.action, reviewer_id, note: body.note, edit_payload };
    let task = store.decide(&id, decision, body.expected_version)?;
    Ok(Json(task).into_response())
}

async fn stats(State(store): State<Store>) -> Response {
    Json(store.stats()).into_response()
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(State(store): State<Store>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    match q.format.as_deref() {
        None | Some("sft") => {}
        Some(other) => return Err(ApiError::bad_request(format!("unsupported format {other:?}"))),
    }
    let records = task_records(&store.state().tasks);
    let mut body = Vec::new();
    write_sft(&mut body, &records).map_err(ReviewError::Io)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(store: Store) -> Router {
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/decision", post(decide))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .with_state(store)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    store: Store,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review api listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::super::store::tests::{adjudicated_item, refined_dialogue};
    use super::*;
    use crate::clock::FixedClock;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use serde_json::Value;
    use tower::ServiceExt;

    fn app() -> (Router, Store) {
        let store = Arc::new(ReviewStore::in_memory(Arc::new(FixedClock::from_unix(1_700_000_100))));
        store.enqueue(Payload::Dialogue(refined_dialogue("d1", &["safety-floor"]))).unwrap();
        store.enqueue(Payload::Dialogue(refined_dialogue("d2", &[]))).unwrap();
        store.enqueue(Payload::Knowledge(adjudicated_item("k1"))).unwrap();
        (router(store.clone()), store)
    }

    async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, v)
    }

    fn get(uri: &str) -> Request<Body> {
        Request::get(uri).body(Body::empty()).unwrap()
    }

    fn post(uri: &str, body: Value) -> Request<Body> {
        Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
    }

    #[tokio::test]
    async fn list_filter_and_page() {
        let (app, _) = app();
        let (s, v) = call(&app, get("/api/tasks?status=pending")).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["tasks"].as_array().unwrap().len(), 3);
        let (_, v) = call(&app, get("/api/tasks?flag=safety-floor")).await;
        assert_eq!(v["tasks"][0]["payload_ref"], "d1");
        let (_, v) = call(&app, get("/api/tasks?limit=2")).await;
        let cursor = v["next_cursor"].as_str().unwrap().to_string();
        let (_, v) = call(&app, get(&format!("/api/tasks?limit=2&cursor={cursor}"))).await;
        assert_eq!(v["tasks"].as_array().unwrap().len(), 1);
        let (s, v) = call(&app, get("/api/tasks?cursor=nothex")).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_cursor")));
    }

    #[tokio::test]
    async fn get_one_and_missing() {
        let (app, _) = app();
        let (s, v) = call(&app, get("/api/tasks/task-000003")).await;
        assert_eq!((s, v["kind"].as_str()), (StatusCode::OK, Some("knowledge")));
        let (s, v) = call(&app, get("/api/tasks/task-000404")).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    }

    #[tokio::test]
    async fn decisions() {
        let (app, store) = app();
        let uri = "/api/tasks/task-000001/decision";
        let (s, v) = call(&app, post(uri, json!({"action": "accept", "reviewer_id": "ann", "expected_version": 0}))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!((v["status"].as_str(), v["version"].as_u64()), (Some("accepted"), Some(1)));
        let (s, v) = call(&app, post(uri, json!({"action": "accept", "reviewer_id": "bob", "expected_version": 0}))).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("version_conflict")));

        // Bare dialogue as the edit, reviewer from the header.
        let mut bad = refined_dialogue("d2", &[]);
        bad.turns.truncate(1);
        let req = Request::post("/api/tasks/task-000002/decision")
            .header("content-type", "application/json")
            .header(REVIEWER_HEADER, "cat")
            .body(Body::from(json!({"action": "edit", "edit_payload": bad, "expected_version": 0}).to_string()))
            .unwrap();
        let (s, v) = call(&app, req).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid")));
        assert_eq!(store.get("task-000002").unwrap().status, TaskStatus::Pending);

        let (s, _) = call(&app, post("/api/tasks/task-000002/decision", json!({"action": "accept", "expected_version": 0}))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        let (s, _) = call(&app, post("/api/tasks/task-000002/decision", json!({"action": "maybe", "reviewer_id": "x", "expected_version": 0}))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn stats_and_export() {
        let (app, _) = app();
        for id in ["task-000001", "task-000003"] {
            let uri = format!("/api/tasks/{id}/decision");
            call(&app, post(&uri, json!({"action": "accept", "reviewer_id": "r", "expected_version": 0}))).await;
        }
        let (_, v) = call(&app, get("/api/stats")).await;
        assert_eq!((v["total"].as_u64(), v["by_status"]["accepted"].as_u64()), (Some(3), Some(2)));
        let (s, v) = call(&app, get("/api/export?format=sft")).await;
        assert_eq!(s, StatusCode::OK);
        let text = v.as_str().unwrap().to_string();
        assert_eq!(text.lines().count(), 2);
        let (_, again) = call(&app, get("/api/export")).await;
        assert_eq!(again.as_str(), Some(text.as_str()));
        let (s, _) = call(&app, get("/api/export?format=alpaca")).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }
}
