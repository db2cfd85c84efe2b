//! HTTP and WebSocket routes.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use multicake::geometry::PieceSelection;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{Event, EventKind, SessionError, SessionSpec, SCHEMA_VERSION};
use crate::store::{Store, StoreError};

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "v": SCHEMA_VERSION, "error": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::UnknownSession(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_session", message)
            }
            StoreError::Journal(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", message)
            }
            StoreError::Session(s) => s.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            SessionError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            SessionError::BudgetExceeded { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "budget_exceeded")
            }
            SessionError::UnknownPlayer(_) => (StatusCode::NOT_FOUND, "unknown_player"),
            SessionError::StaleQuery(_) => (StatusCode::CONFLICT, "stale_query"),
            SessionError::Rejected(_) => (StatusCode::UNPROCESSABLE_ENTITY, "rejected"),
            SessionError::NotQuerying(_) => (StatusCode::CONFLICT, "not_querying"),
        };
        ApiError::new(status, code, message)
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/answer", post(submit_answer))
        .route("/sessions/{id}/result", get(session_result))
        .route("/sessions/{id}/events", get(events))
        .with_state(store)
}

#[derive(Serialize)]
struct Created {
    v: u32,
    id: String,
    token: String,
    player_tokens: std::collections::BTreeMap<String, String>,
    status: crate::engine::Status,
}

async fn create_session(
    State(store): State<Arc<Store>>,
    body: Result<Json<SessionSpec>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let Json(spec) =
        body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid", e.body_text()))?;
    let created = tokio::task::spawn_blocking(move || {
        let (handle, id) = store.create(spec)?;
        let status = handle
            .session
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .status();
        Ok::<_, StoreError>(Created {
            v: SCHEMA_VERSION,
            id,
            token: handle.tokens.session.clone(),
            player_tokens: handle.tokens.players.clone(),
            status,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn session_state(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let handle = store.get(&id)?;
    let snapshot = handle
        .session
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .snapshot();
    Ok(Json(snapshot).into_response())
}

#[derive(Deserialize)]
struct QueryParams {
    player: String,
    token: Option<String>,
}

fn bearer(headers: &HeaderMap, fallback: Option<&str>) -> Option<String> {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string)
        .or_else(|| fallback.map(str::to_string))
}

fn authorize(
    tokens: &crate::store::Tokens,
    token: Option<String>,
    player: Option<&str>,
) -> ApiResult<()> {
    match token {
        Some(t) if tokens.allows(&t, player) => Ok(()),
        Some(_) => Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            "token does not grant this player",
        )),
        None => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "session token required",
        )),
    }
}

async fn next_query(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(params): Query<QueryParams>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let handle = store.get(&id)?;
    authorize(
        &handle.tokens,
        bearer(&headers, params.token.as_deref()),
        Some(&params.player),
    )?;
    let s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
    let query = s.next_query(&params.player)?;
    Ok(Json(json!({ "v": SCHEMA_VERSION, "status": s.status(), "query": query })).into_response())
}

#[derive(Deserialize)]
struct AnswerBody {
    player: String,
    query_id: u64,
    selection: PieceSelection,
}

async fn submit_answer(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<AnswerBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) =
        body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid", e.body_text()))?;
    let handle = store.get(&id)?;
    authorize(&handle.tokens, bearer(&headers, None), Some(&body.player))?;
    let ack = tokio::task::spawn_blocking(move || {
        store.answer(&id, &body.player, body.query_id, body.selection)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ack).into_response())
}

async fn session_result(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let handle = store.get(&id)?;
    let s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
    let snapshot = s.snapshot();
    Ok(Json(json!({
        "v": SCHEMA_VERSION,
        "status": snapshot.status,
        "result": snapshot.result,
        "failure": snapshot.failure,
    }))
    .into_response())
}

async fn events(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let handle = store.get(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_events(socket, handle)))
}

async fn stream_events(mut socket: WebSocket, handle: Arc<crate::store::SessionHandle>) {
    // subscribe before the snapshot so nothing between the two is lost
    let mut rx = handle.events.subscribe();
    let first = {
        let s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        let snapshot = s.snapshot();
        let kind = if snapshot.result.is_some() {
            EventKind::Result
        } else {
            EventKind::Progress
        };
        Event {
            v: SCHEMA_VERSION,
            kind,
            payload: serde_json::to_value(snapshot).expect("snapshot serializes"),
        }
    };
    if send(&mut socket, &first).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            e = rx.recv() => match e {
                Ok(e) => {
                    if send(&mut socket, &e).await.is_err() {
                        return;
                    }
                }
                Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => continue,
                Err(_) => return,
            },
            m = socket.recv() => match m {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                _ => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, e: &Event) -> Result<(), axum::Error> {
    let text = serde_json::to_string(e).expect("event serializes");
    socket.send(Message::Text(text.into())).await
}

/// Serves until the listener fails.
pub async fn serve(store: Arc<Store>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}
