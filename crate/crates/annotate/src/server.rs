use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::AnnotateError;
use crate::store::Store;

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            AnnotateError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            AnnotateError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            AnnotateError::Sequencing(_) => (StatusCode::CONFLICT, "sequencing"),
            AnnotateError::CampaignComplete => (StatusCode::GONE, "campaign_complete"),
            AnnotateError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({"error": kind, "message": self.to_string()}))).into_response()
    }
}

type AppState = Arc<Store>;

/// Run a store operation off the async executor; commits fsync.
async fn blocking<T, F>(store: AppState, f: F) -> Result<T, AnnotateError>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, AnnotateError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| AnnotateError::Io(std::io::Error::other(e)))?
}

#[derive(Deserialize)]
struct CreateSession {
    annotator_id: String,
}

async fn create_session(State(store): State<AppState>, Json(body): Json<CreateSession>) -> Result<Response, AnnotateError> {
    let session = blocking(store, move |s| s.create_session(&body.annotator_id)).await?;
    Ok((StatusCode::CREATED, Json(session_view(&session))).into_response())
}

fn session_view(s: &crate::store::Session) -> serde_json::Value {
    json!({
        "session_id": s.session_id,
        "annotator_id": s.annotator_id,
        "cursor": s.cursor(),
        "total": s.stimuli.len(),
        "status": s.status,
    })
}

async fn get_session(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, AnnotateError> {
    let session = store.session(&id)?;
    Ok(Json(session_view(&session)).into_response())
}

async fn next(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, AnnotateError> {
    Ok(Json(store.next_stimulus(&id)?).into_response())
}

#[derive(Deserialize)]
struct Submit {
    stimulus_id: String,
    option: String,
    elapsed_ms: u64,
}

async fn submit(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Submit>,
) -> Result<Response, AnnotateError> {
    let ack = blocking(store, move |s| s.submit_answer(&id, &body.stimulus_id, &body.option, body.elapsed_ms)).await?;
    Ok(Json(ack).into_response())
}

async fn status(State(store): State<AppState>) -> Response {
    Json(store.status()).into_response()
}

async fn export(State(store): State<AppState>, headers: HeaderMap) -> Result<Response, AnnotateError> {
    if let Some(token) = &store.campaign().config.admin_token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(AnnotateError::Unauthorized);
        }
    }
    Ok(Json(store.aggregate()?).into_response())
}

pub fn router(store: Arc<Store>) -> Router {
    let cfg = &store.campaign().config;
    let mut app = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/next", get(next))
        .route("/api/sessions/{id}/answers", post(submit))
        .route("/api/campaign/status", get(status))
        .route("/api/admin/export", get(export))
        .nest_service("/assets", ServeDir::new(cfg.image_root()));
    if let Some(ui) = &cfg.ui_dir {
        app = app.fallback_service(ServeDir::new(ui).append_index_html_on_directories(true));
    }
    app.with_state(store)
}

/// Serve until the process is stopped.
pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> Result<(), AnnotateError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}
