//! HTTP+JSON front end.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::engine::SessionConfig;
use crate::error::ServiceError;
use crate::session::SessionManager;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub revision: u64,
    pub choice: usize,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::RevisionConflict { .. } | ServiceError::SessionClosed(_) => StatusCode::CONFLICT,
            ServiceError::ChoiceOutOfRange { .. } | ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(_) if self.code() == "invalid_request" || self.code() == "choice_out_of_range" => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.body())).into_response()
    }
}

type Mgr = Arc<SessionManager>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Invalid(format!("worker failed: {e}")))?
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(e.to_string()))
}

async fn create(State(m): State<Mgr>, body: axum::body::Bytes) -> Result<impl IntoResponse, ServiceError> {
    let cfg: SessionConfig = parse(&body)?;
    let created = blocking(move || m.create_session(cfg)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn submit(
    State(m): State<Mgr>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let req: SubmitRequest = parse(&body)?;
    Ok(Json(blocking(move || m.submit_response(&id, req.revision, req.choice)).await?))
}

async fn recommendation(State(m): State<Mgr>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(move || m.get_recommendation(&id)).await?))
}

async fn state(State(m): State<Mgr>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(m.get_session(&id)?))
}

async fn close(State(m): State<Mgr>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    blocking(move || m.close_session(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

/// Routes:
/// `POST /sessions`, `POST /sessions/{id}/responses`,
/// `GET /sessions/{id}/recommendation`, `GET /sessions/{id}`,
/// `POST /sessions/{id}/close`.
pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/responses", post(submit))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/close", post(close))
        .with_state(manager)
}

/// Serves until the process is stopped.
pub async fn serve(manager: Arc<SessionManager>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(manager)).await
}
