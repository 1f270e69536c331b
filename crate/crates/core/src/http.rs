//! axum server exposing the `/v1/*` JSON endpoints.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::api::{self, ApiResult};
use crate::config::Defaults;

/// Request bodies above this size are rejected.
pub const BODY_LIMIT: usize = 32 * 1024 * 1024;

type Handler = fn(&[u8], &Defaults) -> ApiResult<Vec<u8>>;

async fn run(cfg: Arc<Defaults>, body: Bytes, handler: Handler) -> Response {
    let result = tokio::task::spawn_blocking(move || handler(&body, &cfg)).await;
    match result {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Ok(Err(e)) => {
            let status = StatusCode::from_u16(e.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, [(header::CONTENT_TYPE, "application/json")], e.to_json()).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub fn router(cfg: Defaults) -> Router {
    let cfg = Arc::new(cfg);
    Router::new()
        .route("/v1/health", get(|| async { Json(api::handle_health()) }))
        .route(
            "/v1/synthesize",
            post(|State(c): State<Arc<Defaults>>, b: Bytes| run(c, b, api::handle_synthesize)),
        )
        .route(
            "/v1/extract",
            post(|State(c): State<Arc<Defaults>>, b: Bytes| run(c, b, api::handle_extract)),
        )
        .route(
            "/v1/expand-texture",
            post(|State(c): State<Arc<Defaults>>, b: Bytes| run(c, b, api::handle_expand)),
        )
        .route(
            "/v1/recolor",
            post(|State(c): State<Arc<Defaults>>, b: Bytes| run(c, b, api::handle_recolor)),
        )
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(cfg)
}

pub async fn serve(addr: SocketAddr, cfg: Defaults) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(cfg)).await
}
